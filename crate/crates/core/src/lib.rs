//! Offline spatio-temporal value learning and budget-constrained discount
//! allocation for ride-hailing marketplaces.

pub mod action;
pub mod alloc;
pub mod eval;
pub mod geo;
pub mod learn;
pub mod market;
pub mod mdp;
pub mod model;
pub mod pipeline;
pub mod state;
pub mod tiles;
pub mod time;

/// Seed of the `index`-th independent stream derived from `seed`.
pub fn split_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 33)).wrapping_mul(0xff51_afd7_ed55_8ccd);
    z ^ (z >> 33)
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
