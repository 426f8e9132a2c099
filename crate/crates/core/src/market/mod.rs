//! Synthetic trip logs and the demand-response model.
//!
//! Conversion (ECR) is logistic in the discount depth; completion (CR) is a
//! per-trip constant that pricing does not affect.

mod city;
mod generate;
mod simulate;
mod standard;
mod trip;

pub use city::{Archetype, BetaParams, CityModel, DemandParams, Zone, ZoneProfile};
pub use generate::{day_seed, generate_city, generate_with_grid, DayPlan};
pub use simulate::{gmv_by_slot, simulate_policy, write_outcomes_csv, Outcome, SimMode};
pub use trip::{logistic, TripRecord, SEGMENT_MINUTES};

#[cfg(test)]
pub(crate) use trip::fixtures;

use std::io::{self, BufRead, Write};
use thiserror::Error;

/// Edge length of the cells trips are located in by [`generate_city`].
pub const TRIP_CELL_EDGE_M: f64 = 300.0;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("invalid city model: {0}")]
    InvalidCity(String),
    #[error("invalid trip {trip_id}: {reason}")]
    InvalidTrip { trip_id: u64, reason: String },
    #[error("discount {0} is not on the action menu")]
    NotOnMenu(f64),
    #[error("{trips} trips but {actions} actions")]
    LengthMismatch { trips: usize, actions: usize },
    #[error("trip log line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Writes one JSON object per line.
pub fn write_trips_jsonl<W: Write>(mut out: W, trips: &[TripRecord]) -> Result<(), MarketError> {
    for t in trips {
        serde_json::to_writer(&mut out, t).map_err(io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trips_jsonl<R: BufRead>(input: R) -> Result<Vec<TripRecord>, MarketError> {
    let mut trips = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let trip = serde_json::from_str(&line).map_err(|source| MarketError::Parse { line: i + 1, source })?;
        trips.push(trip);
    }
    Ok(trips)
}
