//! Flat-top hexagonal grids over a local planar projection of the city.
//!
//! Cells are addressed with axial coordinates `(q, r)`. A grid level is fully
//! described by its edge length and a planar offset; level `k` of a
//! [`HexGrid`] uses the `k`-th configured edge length and zero offset.
//! Shifted copies of the same lattice back the extra CMAC tilings.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const EARTH_RADIUS_M: f64 = 6_371_008.8;
const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Error, PartialEq)]
pub enum GeoError {
    #[error("point ({lat}, {lon}) lies outside the city bounding box")]
    OutOfBounds { lat: f64, lon: f64 },
    #[error("resolution level {0} is not configured")]
    BadLevel(usize),
    #[error("cell id {0:#x} is not valid for this grid")]
    BadCell(u64),
    #[error("invalid grid configuration: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.min_lat && lat <= self.max_lat && lon >= self.min_lon && lon <= self.max_lon
    }

    pub fn center(&self) -> LatLon {
        LatLon { lat: 0.5 * (self.min_lat + self.max_lat), lon: 0.5 * (self.min_lon + self.max_lon) }
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        let finite = [self.min_lat, self.max_lat, self.min_lon, self.max_lon].iter().all(|v| v.is_finite());
        if !finite || self.min_lat >= self.max_lat || self.min_lon >= self.max_lon {
            return Err(GeoError::Config(format!("degenerate bounding box {self:?}")));
        }
        if self.min_lat < -85.0 || self.max_lat > 85.0 {
            return Err(GeoError::Config("bounding box too close to a pole".into()));
        }
        Ok(())
    }
}

/// Equirectangular projection about the bounding-box center, in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    origin: LatLon,
    cos_lat0: f64,
}

impl Projection {
    pub fn new(origin: LatLon) -> Projection {
        Projection { origin, cos_lat0: origin.lat.to_radians().cos() }
    }

    pub fn to_xy(&self, lat: f64, lon: f64) -> (f64, f64) {
        let x = EARTH_RADIUS_M * (lon - self.origin.lon).to_radians() * self.cos_lat0;
        let y = EARTH_RADIUS_M * (lat - self.origin.lat).to_radians();
        (x, y)
    }

    pub fn to_latlon(&self, x: f64, y: f64) -> LatLon {
        LatLon {
            lat: self.origin.lat + (y / EARTH_RADIUS_M).to_degrees(),
            lon: self.origin.lon + (x / (EARTH_RADIUS_M * self.cos_lat0)).to_degrees(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Axial {
    pub q: i32,
    pub r: i32,
}

impl Axial {
    pub fn distance(self, other: Axial) -> i32 {
        let dq = self.q - other.q;
        let dr = self.r - other.r;
        (dq.abs() + dr.abs() + (dq + dr).abs()) / 2
    }

    pub fn neighbors(self) -> [Axial; 6] {
        const DIRS: [(i32, i32); 6] = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)];
        DIRS.map(|(dq, dr)| Axial { q: self.q + dq, r: self.r + dr })
    }
}

/// A single hexagonal lattice: edge length plus planar offset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HexLattice {
    pub edge_m: f64,
    pub offset: (f64, f64),
}

impl HexLattice {
    pub fn center(&self, h: Axial) -> (f64, f64) {
        let s = self.edge_m;
        (self.offset.0 + s * 1.5 * h.q as f64, self.offset.1 + s * SQRT3 * (h.r as f64 + 0.5 * h.q as f64))
    }

    /// Hexagon containing the planar point (cube rounding).
    pub fn cell_at(&self, x: f64, y: f64) -> Axial {
        let x = x - self.offset.0;
        let y = y - self.offset.1;
        let qf = (2.0 / 3.0) * x / self.edge_m;
        let rf = (-x / 3.0 + SQRT3 / 3.0 * y) / self.edge_m;
        let sf = -qf - rf;
        let (mut q, mut r, s) = (qf.round(), rf.round(), sf.round());
        let (dq, dr, ds) = ((q - qf).abs(), (r - rf).abs(), (s - sf).abs());
        if dq > dr && dq > ds {
            q = -r - s;
        } else if dr > ds {
            r = -q - s;
        }
        Axial { q: q as i32, r: r as i32 }
    }
}

/// Opaque cell identifier: level in the top byte, biased axial coordinates below.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellId(pub u64);

const COORD_BITS: u32 = 28;
const COORD_BIAS: i64 = 1 << (COORD_BITS - 1);
const COORD_MASK: u64 = (1 << COORD_BITS) - 1;

impl CellId {
    pub fn encode(level: usize, h: Axial) -> Option<CellId> {
        let q = h.q as i64 + COORD_BIAS;
        let r = h.r as i64 + COORD_BIAS;
        let range = 0..(1i64 << COORD_BITS);
        if level > 0xff || !range.contains(&q) || !range.contains(&r) {
            return None;
        }
        Some(CellId(((level as u64) << 56) | ((q as u64) << COORD_BITS) | r as u64))
    }

    pub fn level(self) -> usize {
        (self.0 >> 56) as usize
    }

    pub fn axial(self) -> Axial {
        let q = ((self.0 >> COORD_BITS) & COORD_MASK) as i64 - COORD_BIAS;
        let r = (self.0 & COORD_MASK) as i64 - COORD_BIAS;
        Axial { q: q as i32, r: r as i32 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub cell_id: CellId,
    pub center: LatLon,
    pub resolution_level: usize,
}

/// Hierarchy of unshifted hex levels covering a bounding box. Level 0 is the finest.
#[derive(Clone, Debug, PartialEq)]
pub struct HexGrid {
    bbox: BoundingBox,
    projection: Projection,
    edges_m: Vec<f64>,
}

impl HexGrid {
    pub fn new(bbox: BoundingBox, edges_m: Vec<f64>) -> Result<HexGrid, GeoError> {
        bbox.validate()?;
        if edges_m.is_empty() {
            return Err(GeoError::Config("no hex resolutions".into()));
        }
        if edges_m.iter().any(|e| !e.is_finite() || *e <= 0.0) {
            return Err(GeoError::Config("hex edge lengths must be positive".into()));
        }
        if edges_m.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GeoError::Config("hex resolutions must be strictly increasing".into()));
        }
        Ok(HexGrid { bbox, projection: Projection::new(bbox.center()), edges_m })
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn projection(&self) -> &Projection {
        &self.projection
    }

    pub fn num_levels(&self) -> usize {
        self.edges_m.len()
    }

    pub fn edge_m(&self, level: usize) -> Result<f64, GeoError> {
        self.edges_m.get(level).copied().ok_or(GeoError::BadLevel(level))
    }

    pub fn lattice(&self, level: usize) -> Result<HexLattice, GeoError> {
        Ok(HexLattice { edge_m: self.edge_m(level)?, offset: (0.0, 0.0) })
    }

    /// The unique cell at `level` containing the point.
    pub fn locate(&self, lat: f64, lon: f64, level: usize) -> Result<GridCell, GeoError> {
        if !self.bbox.contains(lat, lon) {
            return Err(GeoError::OutOfBounds { lat, lon });
        }
        let lattice = self.lattice(level)?;
        let (x, y) = self.projection.to_xy(lat, lon);
        let h = lattice.cell_at(x, y);
        self.make_cell(level, h, &lattice)
    }

    /// Rebuilds a cell from its id.
    pub fn cell(&self, id: CellId) -> Result<GridCell, GeoError> {
        let level = id.level();
        let lattice = self.lattice(level).map_err(|_| GeoError::BadCell(id.0))?;
        self.make_cell(level, id.axial(), &lattice)
    }

    /// Planar coordinates of a cell center.
    pub fn cell_xy(&self, id: CellId) -> Result<(f64, f64), GeoError> {
        let lattice = self.lattice(id.level()).map_err(|_| GeoError::BadCell(id.0))?;
        Ok(lattice.center(id.axial()))
    }

    /// Planar distance between two cell centers in meters.
    pub fn distance_m(&self, a: CellId, b: CellId) -> Result<f64, GeoError> {
        let (ax, ay) = self.cell_xy(a)?;
        let (bx, by) = self.cell_xy(b)?;
        Ok((ax - bx).hypot(ay - by))
    }

    fn make_cell(&self, level: usize, h: Axial, lattice: &HexLattice) -> Result<GridCell, GeoError> {
        let cell_id = CellId::encode(level, h).ok_or(GeoError::BadCell(u64::MAX))?;
        let (cx, cy) = lattice.center(h);
        Ok(GridCell { cell_id, center: self.projection.to_latlon(cx, cy), resolution_level: level })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> HexGrid {
        let bbox = BoundingBox { min_lat: 30.55, max_lat: 30.75, min_lon: 104.0, max_lon: 104.2 };
        HexGrid::new(bbox, vec![300.0, 900.0, 2700.0]).unwrap()
    }

    #[test]
    fn center_is_fixed_point() {
        let g = grid();
        for level in 0..3 {
            let c = g.locate(30.66, 104.11, level).unwrap();
            let again = g.locate(c.center.lat, c.center.lon, level).unwrap();
            assert_eq!(again.cell_id, c.cell_id);
            assert_eq!(g.cell(c.cell_id).unwrap(), c);
        }
    }

    #[test]
    fn out_of_bounds_is_error() {
        let g = grid();
        assert!(matches!(g.locate(31.0, 104.1, 0), Err(GeoError::OutOfBounds { .. })));
        assert_eq!(g.locate(30.6, 104.1, 3), Err(GeoError::BadLevel(3)));
    }

    #[test]
    fn rejects_non_increasing_resolutions() {
        let bbox = grid().bbox;
        assert!(HexGrid::new(bbox, vec![900.0, 300.0]).is_err());
        assert!(HexGrid::new(bbox, vec![]).is_err());
    }

    #[test]
    fn neighbor_centers_equidistant() {
        let lattice = HexLattice { edge_m: 300.0, offset: (12.0, -7.0) };
        let h = Axial { q: 3, r: -2 };
        let (cx, cy) = lattice.center(h);
        for n in h.neighbors() {
            let (nx, ny) = lattice.center(n);
            assert!(((nx - cx).hypot(ny - cy) - 300.0 * SQRT3).abs() < 1e-9);
            assert_eq!(h.distance(n), 1);
        }
    }

    #[test]
    fn cell_id_roundtrip() {
        let h = Axial { q: -1234, r: 987 };
        let id = CellId::encode(2, h).unwrap();
        assert_eq!(id.level(), 2);
        assert_eq!(id.axial(), h);
    }
}
