//! Policy evaluation on a fixed trip set: GMV, spend against budget, discount
//! histograms, and demand steering into short-supply cells.

use crate::action::{Action, NUM_ACTIONS};
use crate::geo::{CellId, GeoError, HexGrid};
use crate::market::{simulate_policy, CityModel, MarketError, SimMode, TripRecord};
use crate::time::{DayKind, TimeSlot};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("policy {name:?} assigns {actions} actions to {trips} trips")]
    LengthMismatch { name: String, trips: usize, actions: usize },
    #[error("no policies to compare")]
    NoPolicies,
    #[error("baseline index {0} is out of range")]
    Baseline(usize),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type CellSlot = (CellId, TimeSlot);

/// `D_t^g`: summed `delta_ecr` of the assigned actions over trips arriving in
/// cell `g` during slot `t`, pooled across days of the same kind.
pub fn dest_delta_ecr(trips: &[TripRecord], actions: &[Action]) -> BTreeMap<CellSlot, f64> {
    assert_eq!(trips.len(), actions.len(), "one action per trip");
    let mut d: BTreeMap<CellSlot, f64> = BTreeMap::new();
    for (t, &a) in trips.iter().zip(actions) {
        let (_, slot) = t.arrival();
        *d.entry((t.dest, slot)).or_default() += t.delta_ecr(a);
    }
    d
}

/// Idle-driver supply minus inquiries per cell and slot, both per day of the
/// slot's kind. Inquiries are counted at the trip origin.
pub fn supply_minus_demand(
    trips: &[TripRecord],
    city: &CityModel,
    grid: &HexGrid,
) -> Result<BTreeMap<CellSlot, f64>, EvalError> {
    let mut days: BTreeMap<DayKind, BTreeSet<u32>> = BTreeMap::new();
    for t in trips {
        days.entry(t.day_kind).or_default().insert(t.day);
    }
    let mut out: BTreeMap<CellSlot, f64> = BTreeMap::new();
    for (&kind, seen) in &days {
        for (cell, row) in city.cell_supply(grid, kind) {
            for (i, &s) in row.iter().enumerate() {
                out.insert((cell, TimeSlot::new(i as u32, kind).expect("slot index")), s);
            }
        }
        let n = seen.len() as f64;
        for t in trips.iter().filter(|t| t.day_kind == kind) {
            *out.entry((t.origin, t.request_slot())).or_default() -= 1.0 / n;
        }
    }
    Ok(out)
}

/// Sum of `D` over keys whose supply minus demand is negative.
pub fn short_supply_sum(d: &BTreeMap<CellSlot, f64>, smd: &BTreeMap<CellSlot, f64>) -> f64 {
    d.iter().filter(|(k, _)| smd.get(k).is_some_and(|&v| v < 0.0)).map(|(_, v)| v).sum()
}

/// Decile cut points of the evaluation fares.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FareBands {
    pub edges: Vec<f64>,
}

impl FareBands {
    pub const BANDS: usize = 10;

    pub fn deciles(trips: &[TripRecord]) -> FareBands {
        let mut fares: Vec<f64> = trips.iter().map(|t| t.fare).collect();
        fares.sort_by(f64::total_cmp);
        if fares.is_empty() {
            return FareBands { edges: Vec::new() };
        }
        let n = fares.len();
        let edges = (1..Self::BANDS).map(|k| fares[(k * n / Self::BANDS).min(n - 1)]).collect();
        FareBands { edges }
    }

    pub fn band(&self, fare: f64) -> usize {
        self.edges.partition_point(|&e| e <= fare)
    }

    pub fn len(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledGmv {
    pub replications: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyEval {
    pub name: String,
    pub total_expected_gmv: f64,
    /// `sum (1 - a_i) * fare_i` in trip order.
    pub total_spend: f64,
    pub budget: Option<f64>,
    pub budget_violation: bool,
    pub action_counts: [usize; NUM_ACTIONS],
    pub band_counts: Vec<[usize; NUM_ACTIONS]>,
    pub total_d: f64,
    pub short_supply_d: f64,
    pub sampled: Option<SampledGmv>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyDelta {
    pub name: String,
    /// Percent change of expected GMV against the baseline; `None` when the baseline is 0.
    pub gmv_delta_pct: Option<f64>,
    pub spend_delta_pct: Option<f64>,
    pub short_supply_d_delta_pct: Option<f64>,
    /// Short-supply `D` over the baseline's.
    pub short_supply_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub num_trips: usize,
    pub baseline: String,
    pub budget: Option<f64>,
    pub mode: SimMode,
    pub fare_band_edges: Vec<f64>,
    pub policies: Vec<PolicyEval>,
    pub deltas: Vec<PolicyDelta>,
    pub any_budget_violation: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub budget: Option<f64>,
    pub baseline: usize,
    pub mode: SimMode,
    /// Replications of the sampled simulation; ignored in expected mode.
    pub replications: usize,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { budget: None, baseline: 0, mode: SimMode::Expected, replications: 20, seed: 0 }
    }
}

pub fn evaluate_policy(
    name: &str,
    trips: &[TripRecord],
    actions: &[Action],
    bands: &FareBands,
    smd: &BTreeMap<CellSlot, f64>,
    opts: &EvalOptions,
) -> Result<PolicyEval, EvalError> {
    if trips.len() != actions.len() {
        return Err(EvalError::LengthMismatch { name: name.into(), trips: trips.len(), actions: actions.len() });
    }
    let outcomes = simulate_policy(trips, actions, SimMode::Expected, opts.seed)?;
    let total_expected_gmv = outcomes.iter().map(|o| o.expected_gmv).sum();
    let total_spend: f64 = trips.iter().zip(actions).map(|(t, &a)| t.cost(a)).sum();
    let mut action_counts = [0; NUM_ACTIONS];
    let mut band_counts = vec![[0; NUM_ACTIONS]; bands.len()];
    for (t, a) in trips.iter().zip(actions) {
        action_counts[a.index()] += 1;
        band_counts[bands.band(t.fare)][a.index()] += 1;
    }
    let d = dest_delta_ecr(trips, actions);
    let sampled = match opts.mode {
        SimMode::Expected => None,
        SimMode::Sampled => {
            let n = opts.replications.max(1);
            let mut totals = Vec::with_capacity(n);
            for r in 0..n {
                let out = simulate_policy(trips, actions, SimMode::Sampled, crate::split_seed(opts.seed, r as u64))?;
                totals.push(trips.iter().zip(&out).map(|(t, o)| o.gmv(t.fare)).sum::<f64>());
            }
            let mean = totals.iter().sum::<f64>() / n as f64;
            let var = totals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
            Some(SampledGmv { replications: n, mean, std: var.sqrt() })
        }
    };
    Ok(PolicyEval {
        name: name.into(),
        total_expected_gmv,
        total_spend,
        budget: opts.budget,
        budget_violation: opts.budget.is_some_and(|b| total_spend > b),
        action_counts,
        band_counts,
        total_d: d.values().sum(),
        short_supply_d: short_supply_sum(&d, smd),
        sampled,
    })
}

fn pct(x: f64, base: f64) -> Option<f64> {
    if base == 0.0 {
        (x == 0.0).then_some(0.0)
    } else {
        Some(100.0 * (x - base) / base.abs())
    }
}

fn ratio(x: f64, base: f64) -> Option<f64> {
    if base == 0.0 {
        (x == 0.0).then_some(1.0)
    } else {
        Some(x / base)
    }
}

/// Evaluates every policy on the same trips and budget and reports deltas
/// against `policies[opts.baseline]`.
pub fn compare_policies(
    trips: &[TripRecord],
    policies: &[(String, Vec<Action>)],
    smd: &BTreeMap<CellSlot, f64>,
    opts: &EvalOptions,
) -> Result<ComparisonReport, EvalError> {
    if policies.is_empty() {
        return Err(EvalError::NoPolicies);
    }
    if opts.baseline >= policies.len() {
        return Err(EvalError::Baseline(opts.baseline));
    }
    let bands = FareBands::deciles(trips);
    let evals = policies
        .iter()
        .map(|(name, actions)| evaluate_policy(name, trips, actions, &bands, smd, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let base = &evals[opts.baseline];
    let gmv = |e: &PolicyEval| e.sampled.map_or(e.total_expected_gmv, |s| s.mean);
    let deltas = evals
        .iter()
        .map(|e| PolicyDelta {
            name: e.name.clone(),
            gmv_delta_pct: pct(gmv(e), gmv(base)),
            spend_delta_pct: pct(e.total_spend, base.total_spend),
            short_supply_d_delta_pct: pct(e.short_supply_d, base.short_supply_d),
            short_supply_ratio: ratio(e.short_supply_d, base.short_supply_d),
        })
        .collect();
    for e in evals.iter().filter(|e| e.budget_violation) {
        log::warn!("policy {:?} spends {:.4} over budget {:?}", e.name, e.total_spend, e.budget);
    }
    Ok(ComparisonReport {
        num_trips: trips.len(),
        baseline: base.name.clone(),
        budget: opts.budget,
        mode: opts.mode,
        fare_band_edges: bands.edges,
        any_budget_violation: evals.iter().any(|e| e.budget_violation),
        policies: evals,
        deltas,
    })
}

fn fmt_opt(v: Option<f64>, suffix: &str) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:+.2}{suffix}"))
}

impl ComparisonReport {
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Policy comparison\n");
        let _ = writeln!(
            s,
            "Trips: {}. Baseline: `{}`. Budget: {}.\n",
            self.num_trips,
            self.baseline,
            self.budget.map_or_else(|| "none".into(), |b| format!("{b:.2}"))
        );
        let _ = writeln!(s, "| policy | expected GMV | GMV delta | spend | short-supply D | D ratio | within budget |");
        let _ = writeln!(s, "|---|---:|---:|---:|---:|---:|:---:|");
        for (e, d) in self.policies.iter().zip(&self.deltas) {
            let _ = writeln!(
                s,
                "| {} | {:.2} | {} | {:.2} | {:.3} | {} | {} |",
                e.name,
                e.sampled.map_or(e.total_expected_gmv, |x| x.mean),
                fmt_opt(d.gmv_delta_pct, "%"),
                e.total_spend,
                e.short_supply_d,
                d.short_supply_ratio.map_or_else(|| "n/a".into(), |r| format!("{r:.3}")),
                if e.budget_violation { "NO" } else { "yes" },
            );
        }
        let header: Vec<String> = crate::action::MENU.iter().map(|m| format!("{m:.2}")).collect();
        let _ = writeln!(s, "\n## Discount distribution\n");
        let _ = writeln!(s, "| policy | {} |", header.join(" | "));
        let _ = writeln!(s, "|---|{}", "---:|".repeat(NUM_ACTIONS));
        for e in &self.policies {
            let cells: Vec<String> = e.action_counts.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(s, "| {} | {} |", e.name, cells.join(" | "));
        }
        let _ = writeln!(s, "\n## Discount distribution by fare decile\n");
        for e in &self.policies {
            let _ = writeln!(s, "### {}\n", e.name);
            let _ = writeln!(s, "| fare band | {} |", header.join(" | "));
            let _ = writeln!(s, "|---|{}", "---:|".repeat(NUM_ACTIONS));
            for (b, row) in e.band_counts.iter().enumerate() {
                let lo = if b == 0 { "min".to_string() } else { format!("{:.2}", self.fare_band_edges[b - 1]) };
                let hi = self.fare_band_edges.get(b).map_or_else(|| "max".to_string(), |x| format!("{x:.2}"));
                let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
                let _ = writeln!(s, "| [{lo}, {hi}) | {} |", cells.join(" | "));
            }
            let _ = writeln!(s);
        }
        s
    }
}

#[derive(Debug, Serialize)]
struct CellRow {
    cell_id: u64,
    lat: f64,
    lon: f64,
    day_kind: &'static str,
    slot: u32,
    value: Option<f64>,
    d: Option<f64>,
    supply_minus_demand: Option<f64>,
}

/// One row per (cell, slot) present in any of the maps, ordered by cell then slot.
pub fn write_cell_csv<W: std::io::Write>(
    out: W,
    grid: &HexGrid,
    values: &BTreeMap<CellSlot, f64>,
    d: &BTreeMap<CellSlot, f64>,
    smd: &BTreeMap<CellSlot, f64>,
) -> Result<(), EvalError> {
    let keys: BTreeSet<CellSlot> = values.keys().chain(d.keys()).chain(smd.keys()).copied().collect();
    let mut w = csv::Writer::from_writer(out);
    for key @ (cell, slot) in keys {
        let center = grid.cell(cell)?.center;
        w.serialize(CellRow {
            cell_id: cell.0,
            lat: center.lat,
            lon: center.lon,
            day_kind: slot.day_kind.name(),
            slot: slot.index(),
            value: values.get(&key).copied(),
            d: d.get(&key).copied(),
            supply_minus_demand: smd.get(&key).copied(),
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::NO_DISCOUNT;
    use crate::market::fixtures::trip;

    fn act(i: usize) -> Action {
        Action::from_index(i).unwrap()
    }

    #[test]
    fn no_discount_gives_zero_d() {
        let trips: Vec<TripRecord> = (0..5).map(|i| trip(10.0 + i as f64, 0.2, 2.0)).collect();
        let d = dest_delta_ecr(&trips, &[NO_DISCOUNT; 5]);
        assert!(d.values().all(|&v| v == 0.0));
    }

    #[test]
    fn single_trip_lands_on_its_arrival() {
        let t = trip(40.0, 0.2, 2.0);
        let d = dest_delta_ecr(std::slice::from_ref(&t), &[act(0)]);
        // 600 + 40 minutes lands in slot 21
        let key = (t.dest, TimeSlot::new(21, t.day_kind).unwrap());
        assert_eq!(d.len(), 1);
        assert_eq!(d[&key], t.delta_ecr(act(0)));
    }

    #[test]
    fn shared_destination_sums_by_hand() {
        let mut trips = vec![trip(10.0, 0.1, 1.0), trip(20.0, 0.2, 2.0), trip(30.0, 0.3, 3.0)];
        trips[1].request_time = 605;
        trips[2].request_time = 615;
        let actions = [act(0), act(2), act(4)];
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let hand = (sig(logit(0.1) + 1.0 * 0.25) - 0.1)
            + (sig(logit(0.2) + 2.0 * 0.15) - 0.2)
            + (sig(logit(0.3) + 3.0 * 0.05) - 0.3);
        let d = dest_delta_ecr(&trips, &actions);
        assert_eq!(d.len(), 1);
        assert!((d.values().next().unwrap() - hand).abs() < 1e-12);
    }

    #[test]
    fn additive_over_partitions() {
        let trips: Vec<TripRecord> =
            (0..6).map(|i| TripRecord { request_time: 600 + 25 * i, ..trip(10.0 + i as f64, 0.15, 2.5) }).collect();
        let actions: Vec<Action> = (0..6).map(act).collect();
        let whole = dest_delta_ecr(&trips, &actions);
        let mut parts = dest_delta_ecr(&trips[..2], &actions[..2]);
        for (k, v) in dest_delta_ecr(&trips[2..], &actions[2..]) {
            *parts.entry(k).or_default() += v;
        }
        assert_eq!(whole.keys().collect::<Vec<_>>(), parts.keys().collect::<Vec<_>>());
        for (k, v) in &whole {
            assert!((v - parts[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn self_comparison_has_zero_deltas() {
        let trips: Vec<TripRecord> = (0..20).map(|i| trip(5.0 + i as f64, 0.2, 2.0)).collect();
        let actions: Vec<Action> = (0..20).map(|i| act(i % NUM_ACTIONS)).collect();
        let policies = vec![("a".to_string(), actions.clone()), ("b".to_string(), actions)];
        let report = compare_policies(&trips, &policies, &BTreeMap::new(), &EvalOptions::default()).unwrap();
        for d in &report.deltas {
            assert_eq!(d.gmv_delta_pct, Some(0.0));
            assert_eq!(d.spend_delta_pct, Some(0.0));
        }
        let (a, b) = (&report.policies[0], &report.policies[1]);
        assert_eq!(PolicyEval { name: "b".into(), ..a.clone() }, *b);
        assert_eq!(a.action_counts.iter().sum::<usize>(), 20);
        assert_eq!(a.band_counts.iter().flatten().sum::<usize>(), 20);
    }

    #[test]
    fn spend_is_exact_and_violations_are_flagged() {
        let trips: Vec<TripRecord> = (0..4).map(|i| trip(10.0 * (i + 1) as f64, 0.2, 2.0)).collect();
        let actions = [act(0), act(5), act(3), act(1)];
        let exact = 0.25 * 10.0 + 0.0 + 0.1 * 30.0 + 0.2 * 40.0;
        let opts = EvalOptions { budget: Some(exact), ..Default::default() };
        let report = compare_policies(&trips, &[("p".into(), actions.to_vec())], &BTreeMap::new(), &opts).unwrap();
        assert!((report.policies[0].total_spend - exact).abs() < 1e-12);
        let tight = EvalOptions { budget: Some(exact - 1e-6), ..Default::default() };
        let report = compare_policies(&trips, &[("p".into(), actions.to_vec())], &BTreeMap::new(), &tight).unwrap();
        assert!(report.any_budget_violation && report.policies[0].budget_violation);
    }

    #[test]
    fn zero_supply_with_demand_is_short() {
        let mut city = CityModel::standard();
        for z in &mut city.zones {
            z.weekday.supply = vec![0.0; 48];
        }
        let grid = HexGrid::new(city.bbox, vec![crate::market::TRIP_CELL_EDGE_M]).unwrap();
        let origin = grid.locate(30.655, 104.075, 0).unwrap().cell_id;
        let t = TripRecord { origin, ..trip(10.0, 0.2, 2.0) };
        let smd = supply_minus_demand(std::slice::from_ref(&t), &city, &grid).unwrap();
        assert_eq!(smd[&(origin, t.request_slot())], -1.0);
    }

    #[test]
    fn residential_morning_is_short_in_the_standard_city() {
        use crate::market::{generate_city, DayPlan};
        let city = CityModel::standard();
        let grid = HexGrid::new(city.bbox, vec![crate::market::TRIP_CELL_EDGE_M]).unwrap();
        let trips = generate_city(3, &city, &DayPlan::single(DayKind::Weekday)).unwrap();
        let smd = supply_minus_demand(&trips, &city, &grid).unwrap();
        let center = city.zones[1].center;
        let cell = grid.locate(center.lat, center.lon, 0).unwrap().cell_id;
        // 08:00 peak
        let peak: f64 = (15..=16).map(|i| smd[&(cell, TimeSlot::new(i, DayKind::Weekday).unwrap())]).sum();
        assert!(peak < 0.0, "supply minus demand at the peak: {peak}");
    }

    #[test]
    fn fare_deciles_split_evenly() {
        let trips: Vec<TripRecord> = (0..100).map(|i| trip(1.0 + i as f64, 0.2, 2.0)).collect();
        let bands = FareBands::deciles(&trips);
        assert_eq!(bands.edges.len(), 9);
        let mut counts = [0; 10];
        for t in &trips {
            counts[bands.band(t.fare)] += 1;
        }
        assert_eq!(counts, [10; 10]);
    }
}
