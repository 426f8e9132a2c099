use crate::action::Action;
use crate::market::TripRecord;
use serde::{Deserialize, Serialize};

/// How transition rewards are computed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum RewardMode {
    /// Conversion lift times the per-segment discounted fare.
    #[serde(alias = "eq1")]
    Discounted,
    /// The discounted reward minus `alpha * (1 - a) * fare`.
    #[serde(alias = "eq7")]
    Penalized { alpha: f64 },
}

impl RewardMode {
    pub fn reward(&self, trip: &TripRecord, a: Action, gamma: f64) -> f64 {
        match *self {
            RewardMode::Discounted => discounted_reward(trip, a, gamma),
            RewardMode::Penalized { alpha } => penalized_reward(trip, a, gamma, alpha),
        }
    }
}

/// `delta * sum_{t<T} gamma^t * fare / T`.
pub fn discounted_reward_raw(delta_ecr: f64, fare: f64, segments: u32, gamma: f64) -> f64 {
    let segments = segments.max(1);
    let per_segment = fare / segments as f64;
    let mut acc = 0.0;
    let mut g = 1.0;
    for _ in 0..segments {
        acc += g * per_segment;
        g *= gamma;
    }
    delta_ecr * acc
}

pub fn discounted_reward(trip: &TripRecord, a: Action, gamma: f64) -> f64 {
    discounted_reward_raw(trip.delta_ecr(a), trip.fare, trip.est_travel_slots, gamma)
}

pub fn penalized_reward(trip: &TripRecord, a: Action, gamma: f64, alpha: f64) -> f64 {
    discounted_reward(trip, a, gamma) - alpha * a.discount() * trip.fare
}
