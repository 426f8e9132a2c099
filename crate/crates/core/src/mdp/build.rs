use super::buffer::{BufferMeta, ReplayBuffer, Transition, TripCache};
use super::{MdpError, RewardMode};
use crate::action::{Action, NUM_ACTIONS};
use crate::geo::{CellId, HexGrid};
use crate::market::TripRecord;
use crate::state::{NormStats, SpatioTemporalState, CONTEXT_LEN};
use crate::tiles::TileCoder;
use crate::time::{crosses_episode_boundary, TimeSlot, SLOTS_PER_DAY};
use std::collections::HashMap;

/// Slots counted by the trailing context window.
pub const CONTEXT_WINDOW_SLOTS: u64 = 2;

/// States of one trip: origin at request, destination at drop-off.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TripStates {
    pub s: SpatioTemporalState,
    pub s_next: SpatioTemporalState,
    pub done: bool,
}

#[derive(Default)]
struct SlotCounts {
    inquiries: f64,
    completed: f64,
    arrivals: f64,
}

/// Per-(cell, absolute slot) statistics of a trip log.
pub struct ContextIndex {
    counts: HashMap<(CellId, u64), SlotCounts>,
}

fn absolute_slot(day: u32, minute: u32) -> u64 {
    u64::from(day) * u64::from(SLOTS_PER_DAY) + u64::from(minute / crate::time::SLOT_MINUTES)
}

impl ContextIndex {
    pub fn new(trips: &[TripRecord]) -> ContextIndex {
        let mut counts: HashMap<(CellId, u64), SlotCounts> = HashMap::new();
        for t in trips {
            let o = counts.entry((t.origin, absolute_slot(t.day, t.request_time))).or_default();
            o.inquiries += 1.0;
            o.completed += t.ecr(t.historical_action) * t.cr;
            counts.entry((t.dest, absolute_slot(t.day, t.arrival_minute()))).or_default().arrivals += 1.0;
        }
        ContextIndex { counts }
    }

    /// Features over the slots strictly before `abs_slot`.
    pub fn context(&self, cell: CellId, abs_slot: u64) -> [f64; CONTEXT_LEN] {
        let mut f = [0.0; CONTEXT_LEN];
        for back in 1..=CONTEXT_WINDOW_SLOTS {
            let Some(slot) = abs_slot.checked_sub(back) else { break };
            if let Some(c) = self.counts.get(&(cell, slot)) {
                f[0] += c.inquiries;
                f[1] += c.completed;
                f[2] += c.arrivals;
            }
        }
        f[3] = f[2] - f[0];
        f
    }
}

/// Origin and destination states of every trip. Trips that fail validation
/// or whose cells do not belong to the finest level of `grid` yield an error.
pub fn trip_states(trips: &[TripRecord], grid: &HexGrid) -> Vec<Result<TripStates, MdpError>> {
    let ctx = ContextIndex::new(trips);
    trips.iter().map(|t| states_of(t, grid, &ctx)).collect()
}

fn states_of(t: &TripRecord, grid: &HexGrid, ctx: &ContextIndex) -> Result<TripStates, MdpError> {
    t.validate()?;
    for cell in [t.origin, t.dest] {
        if cell.level() != 0 {
            return Err(MdpError::BadTrip {
                trip_id: t.trip_id,
                reason: format!("cell {} is not on the finest level", cell.0),
            });
        }
        grid.cell(cell)?;
    }
    let end = t.arrival_minute();
    let s = SpatioTemporalState {
        cell: t.origin,
        slot: t.request_slot(),
        context: ctx.context(t.origin, absolute_slot(t.day, t.request_time)),
    };
    let s_next = SpatioTemporalState {
        cell: t.dest,
        slot: TimeSlot::from_minutes(end, t.day_kind),
        context: ctx.context(t.dest, absolute_slot(t.day, end)),
    };
    Ok(TripStates { s, s_next, done: crosses_episode_boundary(t.request_time, end) })
}

pub fn trip_cache(t: &TripRecord, gamma: f64) -> TripCache {
    let mut delta_ecr = [0.0; NUM_ACTIONS];
    let mut discounted = [0.0; NUM_ACTIONS];
    for a in Action::all() {
        delta_ecr[a.index()] = t.delta_ecr(a);
        discounted[a.index()] = RewardMode::Discounted.reward(t, a, gamma);
    }
    TripCache { fare: t.fare, cr: t.cr, delta_ecr, discounted }
}

/// One transition per valid trip, under the trip's historical action.
/// Context normalization is fitted on the origin states of the log.
pub fn build_transitions(
    trips: &[TripRecord],
    coder: &TileCoder,
    gamma: f64,
    mode: RewardMode,
) -> Result<ReplayBuffer, MdpError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(MdpError::Config(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    if let RewardMode::Penalized { alpha } = mode {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(MdpError::Config(format!("alpha must be non-negative, got {alpha}")));
        }
    }
    let mut skipped = 0usize;
    let mut transitions = Vec::with_capacity(trips.len());
    for (t, st) in trips.iter().zip(trip_states(trips, coder.grid())) {
        let st = match st {
            Ok(st) => st,
            Err(e) => {
                log::warn!("skipping trip {}: {e}", t.trip_id);
                skipped += 1;
                continue;
            }
        };
        let cache = trip_cache(t, gamma);
        let a = t.historical_action;
        transitions.push(Transition {
            trip_id: t.trip_id,
            s: st.s,
            a,
            r: cache.reward(a, mode),
            s_next: st.s_next,
            done: st.done,
            cache,
        });
    }
    if skipped > 0 {
        log::warn!("{skipped} of {} trips skipped", trips.len());
    }
    let norm = NormStats::fit(transitions.iter().map(|t| &t.s.context));
    let meta = BufferMeta { gamma, reward_mode: mode, coding: coder.config().clone(), norm, skipped_trips: skipped };
    Ok(ReplayBuffer::new(meta, transitions))
}
