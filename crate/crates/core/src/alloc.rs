//! Budget-constrained discount assignment: pick one menu action per trip,
//! keep total discount spend within budget, maximize total value.
//!
//! This is a multiple-choice knapsack. Three solvers are provided: full
//! enumeration (tiny instances), a dynamic program over scaled integer
//! costs, and Lagrangian bisection with greedy repair for large instances.

use crate::action::{Action, NO_DISCOUNT, NUM_ACTIONS};
use crate::market::TripRecord;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::io;
use thiserror::Error;

/// Largest instance solved by enumeration.
pub const MAX_ENUMERATION: usize = 8;
/// Default cost quantum of the dynamic program, in currency.
pub const DEFAULT_EPSILON: f64 = 0.01;
/// Cap on `N * budget_units` for the dynamic program's choice table.
pub const MAX_DP_CELLS: usize = 300_000_000;

#[derive(Debug, Error)]
pub enum AllocError {
    #[error("budget must be finite and non-negative, got {0}")]
    NegativeBudget(f64),
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("instance too large for the exact solver: {0}")]
    TooLarge(String),
    #[error("duplicate trip id {0}")]
    DuplicateTrip(u64),
    #[error("row {row} is not one-hot")]
    NotOneHot { row: usize },
    #[error("trip {0} has no assigned action")]
    MissingTrip(u64),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationProblem {
    pub trip_ids: Vec<u64>,
    /// `N x 6` value matrix, row-major.
    pub values: Vec<[f64; NUM_ACTIONS]>,
    /// `N x 6` cost matrix, row-major.
    pub costs: Vec<[f64; NUM_ACTIONS]>,
    pub budget: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverTag {
    Exact,
    Lagrangian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationSolution {
    /// Chosen action per row.
    pub choices: Vec<Action>,
    pub objective: f64,
    pub spend: f64,
    pub solver: SolverTag,
    /// Upper bound on `optimum - objective`.
    pub gap_bound: f64,
}

impl AllocationProblem {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<(), AllocError> {
        if !(self.budget.is_finite() && self.budget >= 0.0) {
            return Err(AllocError::NegativeBudget(self.budget));
        }
        let n = self.values.len();
        if self.costs.len() != n || self.trip_ids.len() != n {
            return Err(AllocError::Invalid(format!(
                "{} value rows, {} cost rows, {} trip ids",
                n,
                self.costs.len(),
                self.trip_ids.len()
            )));
        }
        for (i, (a, c)) in self.values.iter().zip(&self.costs).enumerate() {
            if a.iter().any(|v| !v.is_finite()) {
                return Err(AllocError::Invalid(format!("row {i}: non-finite value")));
            }
            if c.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(AllocError::Invalid(format!("row {i}: costs must be finite and non-negative")));
            }
            if c[NO_DISCOUNT.index()] != 0.0 {
                return Err(AllocError::Invalid(format!("row {i}: the no-discount column must cost 0")));
            }
        }
        Ok(())
    }

    /// Objective and spend of an assignment, summed in row order.
    pub fn evaluate(&self, choices: &[Action]) -> (f64, f64) {
        let mut obj = 0.0;
        let mut spend = 0.0;
        for (i, a) in choices.iter().enumerate() {
            obj += self.values[i][a.index()];
            spend += self.costs[i][a.index()];
        }
        (obj, spend)
    }

    fn solution(&self, choices: Vec<Action>, solver: SolverTag, gap_bound: f64) -> AllocationSolution {
        let (objective, spend) = self.evaluate(&choices);
        AllocationSolution { choices, objective, spend, solver, gap_bound }
    }
}

impl AllocationSolution {
    pub fn one_hot(&self) -> Vec<[u8; NUM_ACTIONS]> {
        self.choices.iter().map(|a| one_hot_row(*a)).collect()
    }
}

pub fn one_hot_row(a: Action) -> [u8; NUM_ACTIONS] {
    let mut row = [0u8; NUM_ACTIONS];
    row[a.index()] = 1;
    row
}

pub fn from_one_hot(rows: &[[u8; NUM_ACTIONS]]) -> Result<Vec<Action>, AllocError> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let hot: Vec<usize> = (0..NUM_ACTIONS).filter(|&k| r[k] == 1).collect();
            if hot.len() != 1 || r.iter().any(|&v| v > 1) {
                return Err(AllocError::NotOneHot { row: i });
            }
            Ok(Action::from_index(hot[0]).expect("menu index"))
        })
        .collect()
}

/// Inputs of one value-matrix row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValueInputs {
    pub delta_ecr: [f64; NUM_ACTIONS],
    pub cr: f64,
    pub fare: f64,
    pub v_s: f64,
    pub v_next: f64,
    pub done: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueVariant {
    /// `delta * cr * (beta * fare + (1 - beta) * gamma * (1 - d) * V(s') - V(s))`.
    #[default]
    Verbatim,
    /// Not from the source formula: `beta` also weighs `V(s)`,
    /// `delta * cr * (beta * fare + (1 - beta) * (gamma * (1 - d) * V(s') - V(s)))`.
    Symmetric,
}

pub fn value_row(x: &ValueInputs, beta: f64, gamma: f64, variant: ValueVariant) -> [f64; NUM_ACTIONS] {
    let next = if x.done { 0.0 } else { gamma * x.v_next };
    let inner = match variant {
        ValueVariant::Verbatim => beta * x.fare + (1.0 - beta) * next - x.v_s,
        ValueVariant::Symmetric => beta * x.fare + (1.0 - beta) * (next - x.v_s),
    };
    std::array::from_fn(|k| x.delta_ecr[k] * x.cr * inner)
}

pub fn build_value_matrix(
    rows: &[ValueInputs],
    beta: f64,
    gamma: f64,
    variant: ValueVariant,
) -> Vec<[f64; NUM_ACTIONS]> {
    rows.iter().map(|x| value_row(x, beta, gamma, variant)).collect()
}

pub fn cost_row(fare: f64) -> [f64; NUM_ACTIONS] {
    std::array::from_fn(|k| Action::from_index(k).expect("menu index").discount() * fare)
}

pub fn build_cost_matrix(trips: &[TripRecord]) -> Vec<[f64; NUM_ACTIONS]> {
    trips.iter().map(|t| cost_row(t.fare)).collect()
}

/// Optimal assignment: enumeration for `N <= 8`, otherwise the scaled-cost
/// dynamic program with quantum `epsilon`.
pub fn solve_exact(problem: &AllocationProblem, epsilon: f64) -> Result<AllocationSolution, AllocError> {
    problem.validate()?;
    if problem.len() <= MAX_ENUMERATION {
        return Ok(solve_enumeration(problem));
    }
    solve_dp(problem, epsilon)
}

pub fn solve_enumeration(problem: &AllocationProblem) -> AllocationSolution {
    let n = problem.len();
    let mut best = vec![NO_DISCOUNT; n];
    let (mut best_obj, _) = problem.evaluate(&best);
    let mut digits = vec![0usize; n];
    let mut choices = vec![Action::from_index(0).expect("menu index"); n];
    loop {
        for (c, &d) in choices.iter_mut().zip(&digits) {
            *c = Action::from_index(d).expect("menu index");
        }
        let (obj, spend) = problem.evaluate(&choices);
        if spend <= problem.budget && obj > best_obj {
            best_obj = obj;
            best.copy_from_slice(&choices);
        }
        // odometer increment
        let mut i = 0;
        while i < n {
            digits[i] += 1;
            if digits[i] < NUM_ACTIONS {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
        if i == n {
            break;
        }
    }
    problem.solution(best, SolverTag::Exact, 0.0)
}

struct Option_ {
    units: usize,
    value: f64,
    action: Action,
}

/// Non-dominated options of a row, by increasing cost and strictly increasing value.
fn frontier(values: &[f64; NUM_ACTIONS], costs: &[f64; NUM_ACTIONS], epsilon: f64) -> Vec<Option_> {
    let mut opts: Vec<Option_> = Action::all()
        .map(|a| Option_ { units: (costs[a.index()] / epsilon).ceil() as usize, value: values[a.index()], action: a })
        .collect();
    opts.sort_by(|x, y| {
        x.units.cmp(&y.units).then(y.value.total_cmp(&x.value)).then(x.action.index().cmp(&y.action.index()))
    });
    let mut out: Vec<Option_> = Vec::new();
    for o in opts {
        if out.last().is_none_or(|l| o.value > l.value) {
            out.push(o);
        }
    }
    out
}

/// Dynamic program over costs rounded up to multiples of `epsilon`.
///
/// Every DP solution is feasible for the true costs. The gap bound compares
/// the DP optimum at `B/eps` units with the optimum at `B/eps + N` units,
/// which dominates the true optimum because rounding adds under one unit per row.
pub fn solve_dp(problem: &AllocationProblem, epsilon: f64) -> Result<AllocationSolution, AllocError> {
    problem.validate()?;
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(AllocError::Invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let n = problem.len();
    let budget_units = (problem.budget / epsilon).floor();
    let fronts: Vec<Vec<Option_>> =
        problem.values.iter().zip(&problem.costs).map(|(a, c)| frontier(a, c, epsilon)).collect();
    let max_units: f64 = fronts.iter().map(|f| f.last().map_or(0, |o| o.units) as f64).sum();
    let cap = budget_units.min(max_units) as usize;
    let wide = (cap + n).min(max_units as usize);
    if (n as f64) * (wide as f64 + 1.0) > MAX_DP_CELLS as f64 {
        return Err(AllocError::TooLarge(format!("{n} rows x {} budget units", wide + 1)));
    }

    // choice[i][b]: frontier index taken by row i when b units remain for rows 0..=i
    let mut choice = vec![0u8; n * (wide + 1)];
    let mut dp = vec![0.0f64; wide + 1];
    let mut next = vec![0.0f64; wide + 1];
    for (i, front) in fronts.iter().enumerate() {
        let base = front[0].value;
        for b in 0..=wide {
            next[b] = dp[b] + base;
        }
        let row = &mut choice[i * (wide + 1)..(i + 1) * (wide + 1)];
        for (k, o) in front.iter().enumerate().skip(1) {
            for b in o.units..=wide {
                let v = dp[b - o.units] + o.value;
                if v > next[b] {
                    next[b] = v;
                    row[b] = k as u8;
                }
            }
        }
        std::mem::swap(&mut dp, &mut next);
    }

    let mut choices = vec![NO_DISCOUNT; n];
    let mut b = cap;
    for i in (0..n).rev() {
        let o = &fronts[i][choice[i * (wide + 1) + b] as usize];
        choices[i] = o.action;
        b -= o.units;
    }
    let gap = (dp[wide] - dp[cap]).max(0.0);
    enforce_budget(problem, &mut choices);
    Ok(problem.solution(choices, SolverTag::Exact, gap))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagrangianConfig {
    /// Bisection stops when the multiplier bracket is narrower than this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for LagrangianConfig {
    fn default() -> Self {
        LagrangianConfig { tolerance: 1e-9, max_iterations: 200 }
    }
}

/// Per-row argmax of `A - lambda * C`; ties go to the cheaper option, then the lower index.
fn relaxed_choice(values: &[f64; NUM_ACTIONS], costs: &[f64; NUM_ACTIONS], lambda: f64) -> (Action, f64) {
    let mut best = NO_DISCOUNT.index();
    let mut best_v = values[best] - lambda * costs[best];
    for k in 0..NUM_ACTIONS {
        let v = values[k] - lambda * costs[k];
        if v > best_v || (v == best_v && (costs[k], k) < (costs[best], best)) {
            best = k;
            best_v = v;
        }
    }
    (Action::from_index(best).expect("menu index"), best_v)
}

fn relaxed(problem: &AllocationProblem, lambda: f64) -> (Vec<Action>, f64, f64) {
    let mut choices = Vec::with_capacity(problem.len());
    let mut spend = 0.0;
    let mut dual = lambda * problem.budget;
    for (a, c) in problem.values.iter().zip(&problem.costs) {
        let (act, v) = relaxed_choice(a, c, lambda);
        spend += c[act.index()];
        dual += v;
        choices.push(act);
    }
    (choices, spend, dual)
}

/// Bisection on the budget multiplier, greedy repair of the last infeasible
/// relaxed solution, then a greedy fill of leftover budget.
pub fn solve_lagrangian(problem: &AllocationProblem, cfg: LagrangianConfig) -> Result<AllocationSolution, AllocError> {
    problem.validate()?;
    let (choices, spend, dual) = relaxed(problem, 0.0);
    let mut bound = dual;
    if spend <= problem.budget {
        let sol = problem.solution(choices, SolverTag::Lagrangian, 0.0);
        let gap = (bound - sol.objective).max(0.0);
        return Ok(AllocationSolution { gap_bound: gap, ..sol });
    }
    let mut lo = 0.0;
    let mut lo_choices = choices;
    let mut hi = 1.0;
    let mut hi_choices = loop {
        let (c, s, d) = relaxed(problem, hi);
        bound = bound.min(d);
        if s <= problem.budget {
            break c;
        }
        lo = hi;
        lo_choices = c;
        hi *= 2.0;
        if !hi.is_finite() {
            // values so large no multiplier separates them; fall back to no discount
            break vec![NO_DISCOUNT; problem.len()];
        }
    };
    for _ in 0..cfg.max_iterations {
        if hi - lo <= cfg.tolerance * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let (c, s, d) = relaxed(problem, mid);
        bound = bound.min(d);
        if s <= problem.budget {
            hi = mid;
            hi_choices = c;
        } else {
            lo = mid;
            lo_choices = c;
        }
    }

    repair(problem, &mut lo_choices);
    fill(problem, &mut lo_choices);
    fill(problem, &mut hi_choices);
    let (lo_obj, _) = problem.evaluate(&lo_choices);
    let (hi_obj, _) = problem.evaluate(&hi_choices);
    let choices = if lo_obj >= hi_obj { lo_choices } else { hi_choices };
    let sol = problem.solution(choices, SolverTag::Lagrangian, 0.0);
    let gap = (bound - sol.objective).max(0.0);
    Ok(AllocationSolution { gap_bound: gap, ..sol })
}

#[derive(PartialEq)]
struct Move {
    score: f64,
    trip_id: u64,
    row: usize,
    from: Action,
    to: Action,
}

impl Eq for Move {}

impl Ord for Move {
    // max-heap: higher score first, then lower trip id
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.trip_id.cmp(&self.trip_id))
            .then_with(|| other.row.cmp(&self.row))
    }
}

impl PartialOrd for Move {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Cheapest value loss per unit of cost saved among downgrades of a row.
fn best_downgrade(problem: &AllocationProblem, row: usize, from: Action) -> Option<Move> {
    let (a, c) = (&problem.values[row], &problem.costs[row]);
    let mut best: Option<Move> = None;
    for to in Action::all() {
        let saved = c[from.index()] - c[to.index()];
        if saved <= 0.0 {
            continue;
        }
        let lost = a[from.index()] - a[to.index()];
        let m = Move { score: -(lost / saved), trip_id: problem.trip_ids[row], row, from, to };
        if best.as_ref().is_none_or(|b| m.score > b.score) {
            best = Some(m);
        }
    }
    best
}

/// Downgrades rows, cheapest value loss per cost saved first (ties by trip id),
/// until the assignment fits the budget.
pub fn repair(problem: &AllocationProblem, choices: &mut [Action]) {
    let (_, mut spend) = problem.evaluate(choices);
    while spend > problem.budget {
        let mut heap: BinaryHeap<Move> =
            (0..choices.len()).filter_map(|i| best_downgrade(problem, i, choices[i])).collect();
        while spend > problem.budget {
            let Some(m) = heap.pop() else { break };
            if choices[m.row] != m.from {
                continue;
            }
            choices[m.row] = m.to;
            spend -= problem.costs[m.row][m.from.index()] - problem.costs[m.row][m.to.index()];
            if let Some(next) = best_downgrade(problem, m.row, m.to) {
                heap.push(next);
            }
        }
        // recount exactly; incremental sums can drift by an ulp
        spend = problem.evaluate(choices).1;
        if spend > problem.budget && choices.iter().all(|&a| a == NO_DISCOUNT) {
            break;
        }
    }
}

fn best_upgrade(problem: &AllocationProblem, row: usize, from: Action, room: f64) -> Option<Move> {
    let (a, c) = (&problem.values[row], &problem.costs[row]);
    let mut best: Option<Move> = None;
    for to in Action::all() {
        let gain = a[to.index()] - a[from.index()];
        let added = c[to.index()] - c[from.index()];
        if gain <= 0.0 || added > room {
            continue;
        }
        let score = if added <= 0.0 { f64::INFINITY } else { gain / added };
        let m = Move { score, trip_id: problem.trip_ids[row], row, from, to };
        if best
            .as_ref()
            .is_none_or(|b| m.score > b.score || (m.score == b.score && gain > a[b.to.index()] - a[from.index()]))
        {
            best = Some(m);
        }
    }
    best
}

/// Spends leftover budget on the upgrades with the best value gain per unit cost.
pub fn fill(problem: &AllocationProblem, choices: &mut [Action]) {
    let (_, mut spend) = problem.evaluate(choices);
    if spend > problem.budget {
        return;
    }
    let mut heap: BinaryHeap<Move> =
        (0..choices.len()).filter_map(|i| best_upgrade(problem, i, choices[i], problem.budget - spend)).collect();
    while let Some(m) = heap.pop() {
        if choices[m.row] != m.from {
            continue;
        }
        let added = problem.costs[m.row][m.to.index()] - problem.costs[m.row][m.from.index()];
        if spend + added > problem.budget {
            if let Some(alt) = best_upgrade(problem, m.row, m.from, problem.budget - spend) {
                heap.push(alt);
            }
            continue;
        }
        choices[m.row] = m.to;
        spend += added;
        if let Some(next) = best_upgrade(problem, m.row, m.to, problem.budget - spend) {
            heap.push(next);
        }
    }
    enforce_budget(problem, choices);
}

/// Guarantees `spend <= budget` under exact recounting.
fn enforce_budget(problem: &AllocationProblem, choices: &mut [Action]) {
    if problem.evaluate(choices).1 > problem.budget {
        repair(problem, choices);
    }
}

pub type Policy = BTreeMap<u64, Action>;

/// Maps each row's trip id to its chosen action.
pub fn assignment_to_policy(solution: &AllocationSolution, trip_ids: &[u64]) -> Result<Policy, AllocError> {
    if solution.choices.len() != trip_ids.len() {
        return Err(AllocError::Invalid(format!("{} rows for {} trips", solution.choices.len(), trip_ids.len())));
    }
    let mut policy = Policy::new();
    for (&id, &a) in trip_ids.iter().zip(&solution.choices) {
        if policy.insert(id, a).is_some() {
            return Err(AllocError::DuplicateTrip(id));
        }
    }
    Ok(policy)
}

/// One-hot rows of a policy in `trip_ids` order.
pub fn policy_to_one_hot(policy: &Policy, trip_ids: &[u64]) -> Result<Vec<[u8; NUM_ACTIONS]>, AllocError> {
    trip_ids.iter().map(|id| policy.get(id).map(|a| one_hot_row(*a)).ok_or(AllocError::MissingTrip(*id))).collect()
}

/// Actions of a policy in trip order.
pub fn policy_actions(policy: &Policy, trips: &[TripRecord]) -> Result<Vec<Action>, AllocError> {
    trips.iter().map(|t| policy.get(&t.trip_id).copied().ok_or(AllocError::MissingTrip(t.trip_id))).collect()
}

pub fn write_policy_csv<W: io::Write>(out: W, policy: &Policy) -> Result<(), AllocError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trip_id", "action"])?;
    for (id, a) in policy {
        w.write_record([id.to_string(), a.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_policy_csv<R: io::Read>(input: R) -> Result<Policy, AllocError> {
    #[derive(Deserialize)]
    struct Row {
        trip_id: u64,
        action: f64,
    }
    let mut policy = Policy::new();
    for row in csv::Reader::from_reader(input).deserialize() {
        let row: Row = row?;
        let a = Action::from_multiplier(row.action)
            .ok_or_else(|| AllocError::Invalid(format!("trip {}: {} is not on the menu", row.trip_id, row.action)))?;
        if policy.insert(row.trip_id, a).is_some() {
            return Err(AllocError::DuplicateTrip(row.trip_id));
        }
    }
    Ok(policy)
}
