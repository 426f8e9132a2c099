use super::generate::day_seed;
use super::trip::TripRecord;
use super::MarketError;
use crate::action::Action;
use crate::time::SLOTS_PER_DAY;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    /// Probabilities instead of draws; deterministic.
    Expected,
    /// Bernoulli call and completion draws.
    Sampled,
}

/// Per-trip simulation result. In expected mode `called` and `completed`
/// hold probabilities; in sampled mode they are 0 or 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub trip_id: u64,
    pub action: Action,
    pub expected_gmv: f64,
    pub spend: f64,
    pub called: f64,
    pub completed: f64,
}

impl Outcome {
    /// Realized (sampled) or expected GMV: `fare * a * completed`.
    pub fn gmv(&self, fare: f64) -> f64 {
        fare * self.action.multiplier() * self.completed
    }
}

pub fn simulate_policy(
    trips: &[TripRecord],
    actions: &[Action],
    mode: SimMode,
    seed: u64,
) -> Result<Vec<Outcome>, MarketError> {
    if trips.len() != actions.len() {
        return Err(MarketError::LengthMismatch { trips: trips.len(), actions: actions.len() });
    }
    let mut streams: BTreeMap<u32, ChaCha8Rng> = BTreeMap::new();
    let outcomes = trips
        .iter()
        .zip(actions)
        .map(|(t, &a)| {
            let ecr = t.ecr(a);
            let (called, completed) = match mode {
                SimMode::Expected => (ecr, ecr * t.cr),
                SimMode::Sampled => {
                    let rng = streams
                        .entry(t.day)
                        .or_insert_with(|| ChaCha8Rng::seed_from_u64(day_seed(seed ^ 0xc0ff_ee00, t.day)));
                    let called = rng.random::<f64>() < ecr;
                    let done = rng.random::<f64>() < t.cr;
                    (called as u8 as f64, (called && done) as u8 as f64)
                }
            };
            Outcome {
                trip_id: t.trip_id,
                action: a,
                expected_gmv: t.expected_gmv(a),
                spend: t.cost(a),
                called,
                completed,
            }
        })
        .collect();
    Ok(outcomes)
}

/// GMV per request slot, summed over days.
pub fn gmv_by_slot(trips: &[TripRecord], outcomes: &[Outcome]) -> [f64; SLOTS_PER_DAY as usize] {
    let mut out = [0.0; SLOTS_PER_DAY as usize];
    for (t, o) in trips.iter().zip(outcomes) {
        out[t.request_slot().index as usize] += o.gmv(t.fare);
    }
    out
}

pub fn write_outcomes_csv<W: io::Write>(out: W, outcomes: &[Outcome]) -> Result<(), MarketError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trip_id", "action", "expected_gmv", "spend", "called", "completed"])?;
    for o in outcomes {
        w.write_record([
            o.trip_id.to_string(),
            o.action.to_string(),
            o.expected_gmv.to_string(),
            o.spend.to_string(),
            o.called.to_string(),
            o.completed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
