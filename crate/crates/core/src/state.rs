use crate::geo::CellId;
use crate::time::TimeSlot;
use serde::{Deserialize, Serialize};

/// Number of contextual supply/demand features carried by every state.
pub const CONTEXT_LEN: usize = 4;

/// Names of the context features, in storage order.
pub const CONTEXT_FEATURES: [&str; CONTEXT_LEN] = ["inquiries", "completed", "arrivals", "arrivals_minus_inquiries"];

/// MDP state `(g, t, f)`: finest-level cell, semi-hour slot, raw context features.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatioTemporalState {
    pub cell: CellId,
    pub slot: TimeSlot,
    pub context: [f64; CONTEXT_LEN],
}

impl SpatioTemporalState {
    /// Key of the discretized grid used for batch-constrained action search.
    pub fn grid_key(&self) -> (CellId, TimeSlot) {
        (self.cell, self.slot)
    }
}

/// Population mean / standard deviation of the context features.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; CONTEXT_LEN],
    pub std: [f64; CONTEXT_LEN],
}

impl Default for NormStats {
    fn default() -> Self {
        NormStats { mean: [0.0; CONTEXT_LEN], std: [1.0; CONTEXT_LEN] }
    }
}

impl NormStats {
    /// Population statistics; zero-variance features keep unit scale.
    pub fn fit<'a>(contexts: impl IntoIterator<Item = &'a [f64; CONTEXT_LEN]>) -> NormStats {
        let mut n = 0usize;
        let mut sum = [0.0; CONTEXT_LEN];
        let mut sum_sq = [0.0; CONTEXT_LEN];
        for c in contexts {
            n += 1;
            for i in 0..CONTEXT_LEN {
                sum[i] += c[i];
                sum_sq[i] += c[i] * c[i];
            }
        }
        if n == 0 {
            return NormStats::default();
        }
        let mut stats = NormStats::default();
        for i in 0..CONTEXT_LEN {
            let mean = sum[i] / n as f64;
            let var = (sum_sq[i] / n as f64 - mean * mean).max(0.0);
            stats.mean[i] = mean;
            stats.std[i] = if var > 1e-12 { var.sqrt() } else { 1.0 };
        }
        stats
    }

    pub fn apply(&self, context: &[f64; CONTEXT_LEN]) -> [f64; CONTEXT_LEN] {
        std::array::from_fn(|i| (context[i] - self.mean[i]) / self.std[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_stats_standardize() {
        let rows = [[1.0, 5.0, 0.0, 2.0], [3.0, 5.0, 0.0, 4.0]];
        let stats = NormStats::fit(rows.iter());
        assert_eq!(stats.mean, [2.0, 5.0, 0.0, 3.0]);
        assert_eq!(stats.std, [1.0, 1.0, 1.0, 1.0]);
        assert_eq!(stats.apply(&rows[0]), [-1.0, 0.0, 0.0, -1.0]);
    }
}
