use super::RewardMode;
use crate::action::{Action, ActionSet, NUM_ACTIONS};
use crate::geo::CellId;
use crate::state::{NormStats, SpatioTemporalState};
use crate::tiles::CodingConfig;
use crate::time::TimeSlot;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Per-trip quantities cached next to each transition so that relabeling
/// with another action needs no re-simulation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TripCache {
    pub fare: f64,
    pub cr: f64,
    pub delta_ecr: [f64; NUM_ACTIONS],
    /// Discounted (unpenalized) reward under every menu action.
    pub discounted: [f64; NUM_ACTIONS],
}

impl TripCache {
    pub fn reward(&self, a: Action, mode: RewardMode) -> f64 {
        let r = self.discounted[a.index()];
        match mode {
            RewardMode::Discounted => r,
            RewardMode::Penalized { alpha } => r - alpha * a.discount() * self.fare,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub trip_id: u64,
    pub s: SpatioTemporalState,
    pub a: Action,
    pub r: f64,
    pub s_next: SpatioTemporalState,
    pub done: bool,
    pub cache: TripCache,
}

impl Transition {
    /// Same trip under action `a`, reward recomputed from the cache.
    pub fn relabeled(&self, a: Action, mode: RewardMode) -> Transition {
        Transition { a, r: self.cache.reward(a, mode), ..*self }
    }
}

/// Everything needed to interpret the stored states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BufferMeta {
    pub gamma: f64,
    pub reward_mode: RewardMode,
    pub coding: CodingConfig,
    pub norm: NormStats,
    pub skipped_trips: usize,
}

type GridKey = (CellId, TimeSlot);

/// Transitions plus an index from discretized grid to observed action counts.
///
/// The first `original_len` transitions come from the trip log and are never
/// removed. Relabeled transitions are appended after them up to
/// `relabel_capacity`; beyond that the oldest relabel is overwritten.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    pub meta: BufferMeta,
    transitions: Vec<Transition>,
    original_len: usize,
    relabel_capacity: usize,
    /// Position (relative to `original_len`) of the oldest relabel once full.
    relabel_cursor: usize,
    index: HashMap<GridKey, [u32; NUM_ACTIONS]>,
}

impl ReplayBuffer {
    pub fn new(meta: BufferMeta, originals: Vec<Transition>) -> ReplayBuffer {
        let original_len = originals.len();
        let mut buf = ReplayBuffer {
            meta,
            transitions: Vec::with_capacity(originals.len()),
            original_len,
            relabel_capacity: original_len,
            relabel_cursor: 0,
            index: HashMap::new(),
        };
        for t in originals {
            buf.index_add(&t);
            buf.transitions.push(t);
        }
        buf
    }

    /// Rebuilds a buffer with relabels already present (used when loading).
    pub(crate) fn from_parts(
        meta: BufferMeta,
        transitions: Vec<Transition>,
        original_len: usize,
        relabel_cursor: usize,
    ) -> ReplayBuffer {
        let mut buf = ReplayBuffer {
            meta,
            transitions: Vec::with_capacity(transitions.len()),
            original_len,
            relabel_capacity: original_len,
            relabel_cursor,
            index: HashMap::new(),
        };
        for t in transitions {
            buf.index_add(&t);
            buf.transitions.push(t);
        }
        buf
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn original_len(&self) -> usize {
        self.original_len
    }

    pub fn relabel_capacity(&self) -> usize {
        self.relabel_capacity
    }

    pub fn set_relabel_capacity(&mut self, capacity: usize) {
        self.relabel_capacity = capacity;
    }

    pub(crate) fn relabel_cursor(&self) -> usize {
        self.relabel_cursor
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.transitions[i]
    }

    pub fn originals(&self) -> &[Transition] {
        &self.transitions[..self.original_len]
    }

    /// Appends a relabeled transition, evicting the oldest relabel when full.
    pub fn push_relabel(&mut self, t: Transition) {
        if self.relabel_capacity == 0 {
            return;
        }
        let relabels = self.transitions.len() - self.original_len;
        if relabels < self.relabel_capacity {
            self.index_add(&t);
            self.transitions.push(t);
            return;
        }
        let pos = self.original_len + self.relabel_cursor;
        let old = self.transitions[pos];
        self.index_remove(&old);
        self.index_add(&t);
        self.transitions[pos] = t;
        self.relabel_cursor = (self.relabel_cursor + 1) % self.relabel_capacity;
    }

    /// Actions stored for the discretized grid of `s`.
    pub fn observed_actions(&self, s: &SpatioTemporalState) -> ActionSet {
        match self.index.get(&s.grid_key()) {
            None => ActionSet::EMPTY,
            Some(counts) => Action::all().filter(|a| counts[a.index()] > 0).collect(),
        }
    }

    pub fn action_counts(&self, s: &SpatioTemporalState) -> [u32; NUM_ACTIONS] {
        self.index.get(&s.grid_key()).copied().unwrap_or([0; NUM_ACTIONS])
    }

    pub fn num_grid_keys(&self) -> usize {
        self.index.len()
    }

    fn index_add(&mut self, t: &Transition) {
        self.index.entry(t.s.grid_key()).or_insert([0; NUM_ACTIONS])[t.a.index()] += 1;
    }

    fn index_remove(&mut self, t: &Transition) {
        let key = t.s.grid_key();
        if let Some(counts) = self.index.get_mut(&key) {
            counts[t.a.index()] -= 1;
            if counts.iter().all(|&c| c == 0) {
                self.index.remove(&key);
            }
        }
    }
}
