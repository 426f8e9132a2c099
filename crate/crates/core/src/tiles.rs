//! CMAC-style coarse coding of spatio-temporal states.
//!
//! Every hex level contributes `num_tilings_per_resolution` copies of its
//! lattice, shifted by seeded offsets (copy 0 is the unshifted grid used by
//! [`HexGrid::locate`]). Each spatial tiling is crossed with two time
//! windows, `time_window_minutes` and twice that, giving one joint tile per
//! (spatial tiling, window). Joint tiles are hashed into a fixed table of
//! embedding rows; collisions are accepted.

use crate::geo::{BoundingBox, CellId, GeoError, HexGrid, HexLattice};
use crate::state::SpatioTemporalState;
use crate::time::{DayKind, TimeSlot, SLOT_MINUTES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Number of time windows crossed with each spatial tiling.
pub const TIME_WINDOWS: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodingConfig {
    pub bbox: BoundingBox,
    /// Hex edge lengths in meters, finest first.
    pub hex_resolutions: Vec<f64>,
    pub num_tilings_per_resolution: usize,
    /// Finest time window; the coarse window is twice as long.
    pub time_window_minutes: u32,
    /// Rows in the hashed embedding table ("conceptual memory").
    pub hash_table_size: usize,
    pub embedding_dim: usize,
    pub seed: u64,
}

impl CodingConfig {
    pub fn standard(bbox: BoundingBox) -> CodingConfig {
        CodingConfig {
            bbox,
            hex_resolutions: vec![300.0, 900.0, 2700.0],
            num_tilings_per_resolution: 2,
            time_window_minutes: 30,
            hash_table_size: 1 << 18,
            embedding_dim: 16,
            seed: 7,
        }
    }

    pub fn num_tilings(&self) -> usize {
        self.hex_resolutions.len() * self.num_tilings_per_resolution * TIME_WINDOWS
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if self.num_tilings_per_resolution == 0 {
            return Err(GeoError::Config("num_tilings_per_resolution must be positive".into()));
        }
        if self.hash_table_size == 0 || self.hash_table_size > u32::MAX as usize {
            return Err(GeoError::Config("hash_table_size must be in 1..=u32::MAX".into()));
        }
        if self.embedding_dim == 0 {
            return Err(GeoError::Config("embedding_dim must be positive".into()));
        }
        if self.time_window_minutes == 0 || !self.time_window_minutes.is_multiple_of(SLOT_MINUTES) {
            return Err(GeoError::Config("time_window_minutes must be a positive multiple of 30".into()));
        }
        HexGrid::new(self.bbox, self.hex_resolutions.clone()).map(|_| ())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TileSet {
    pub tile_ids: Vec<u32>,
    pub num_tilings: usize,
}

/// One joint space-time tiling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tiling {
    pub level: usize,
    pub copy: usize,
    pub lattice: HexLattice,
    pub window_minutes: u32,
}

#[derive(Clone, Debug)]
pub struct TileCoder {
    cfg: CodingConfig,
    grid: HexGrid,
    tilings: Vec<Tiling>,
}

impl TileCoder {
    pub fn new(cfg: CodingConfig) -> Result<TileCoder, GeoError> {
        cfg.validate()?;
        let grid = HexGrid::new(cfg.bbox, cfg.hex_resolutions.clone())?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut tilings = Vec::with_capacity(cfg.num_tilings());
        for (level, &edge) in cfg.hex_resolutions.iter().enumerate() {
            for copy in 0..cfg.num_tilings_per_resolution {
                let offset = if copy == 0 {
                    (0.0, 0.0)
                } else {
                    // anywhere inside one lattice period
                    (rng.random_range(0.0..1.5 * edge), rng.random_range(0.0..edge * 3f64.sqrt()))
                };
                let lattice = HexLattice { edge_m: edge, offset };
                for w in 0..TIME_WINDOWS as u32 {
                    tilings.push(Tiling { level, copy, lattice, window_minutes: cfg.time_window_minutes << w });
                }
            }
        }
        Ok(TileCoder { cfg, grid, tilings })
    }

    pub fn config(&self) -> &CodingConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &HexGrid {
        &self.grid
    }

    pub fn tilings(&self) -> &[Tiling] {
        &self.tilings
    }

    pub fn num_tilings(&self) -> usize {
        self.tilings.len()
    }

    /// Tiles activated by a point in the plane at a given slot.
    pub fn activate_xy(&self, x: f64, y: f64, slot: TimeSlot) -> TileSet {
        let tile_ids = self
            .tilings
            .iter()
            .enumerate()
            .map(|(t, tiling)| {
                let h = tiling.lattice.cell_at(x, y);
                let bucket = slot.start_minute() / tiling.window_minutes;
                self.hash_tile(t, h.q, h.r, bucket, slot.day_kind)
            })
            .collect();
        TileSet { tile_ids, num_tilings: self.tilings.len() }
    }

    pub fn activate_point(&self, lat: f64, lon: f64, slot: TimeSlot) -> Result<TileSet, GeoError> {
        if !self.grid.bbox().contains(lat, lon) {
            return Err(GeoError::OutOfBounds { lat, lon });
        }
        let (x, y) = self.grid.projection().to_xy(lat, lon);
        Ok(self.activate_xy(x, y, slot))
    }

    /// Tiles of a cell's center.
    pub fn activate_cell(&self, cell: CellId, slot: TimeSlot) -> Result<TileSet, GeoError> {
        let (x, y) = self.grid.cell_xy(cell)?;
        Ok(self.activate_xy(x, y, slot))
    }

    pub fn activate_tiles(&self, s: &SpatioTemporalState) -> Result<TileSet, GeoError> {
        self.activate_cell(s.cell, s.slot)
    }

    fn hash_tile(&self, tiling: usize, q: i32, r: i32, bucket: u32, kind: DayKind) -> u32 {
        let mut h = splitmix(self.cfg.seed ^ 0x5851_f42d_4c95_7f2d);
        for v in [tiling as u64, q as i64 as u64, r as i64 as u64, bucket as u64, kind.as_u8() as u64] {
            h = splitmix(h ^ v);
        }
        (h % self.cfg.hash_table_size as u64) as u32
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Dense `rows x dim` table of f32 embedding rows.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl EmbeddingTable {
    pub fn zeros(rows: usize, dim: usize) -> EmbeddingTable {
        EmbeddingTable { rows, dim, data: vec![0.0; rows * dim] }
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Sum of the embedding rows of the activated tiles.
pub fn embed(tiles: &TileSet, table: &EmbeddingTable) -> Vec<f64> {
    let mut out = vec![0.0; table.dim];
    embed_into(tiles, table, &mut out);
    out
}

pub(crate) fn embed_into(tiles: &TileSet, table: &EmbeddingTable, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for &t in &tiles.tile_ids {
        for (o, w) in out.iter_mut().zip(table.row(t as usize)) {
            *o += *w as f64;
        }
    }
}
