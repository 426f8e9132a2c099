//! Trip logs as MDP transitions, and the replay buffer that holds them.

mod buffer;
mod build;
mod io;
mod reward;

pub use buffer::{BufferMeta, ReplayBuffer, Transition, TripCache};
pub use build::{build_transitions, trip_cache, trip_states, ContextIndex, TripStates, CONTEXT_WINDOW_SLOTS};
pub use io::{read_buffer, write_buffer, RECORD_BYTES, SCHEMA_VERSION};
pub use reward::{discounted_reward, discounted_reward_raw, penalized_reward, RewardMode};

use crate::geo::GeoError;
use crate::market::MarketError;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("trip {trip_id}: {reason}")]
    BadTrip { trip_id: u64, reason: String },
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("corrupt replay buffer: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn save_buffer(path: &Path, buf: &ReplayBuffer) -> Result<(), MdpError> {
    let f = std::fs::File::create(path)?;
    write_buffer(std::io::BufWriter::new(f), buf)
}

pub fn load_buffer(path: &Path) -> Result<ReplayBuffer, MdpError> {
    let f = std::fs::File::open(path)?;
    read_buffer(std::io::BufReader::new(f))
}
