use super::MarketError;
use crate::action::NUM_ACTIONS;
use crate::geo::{BoundingBox, CellId, HexGrid, LatLon};
use crate::time::{DayKind, SLOTS_PER_DAY};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Archetype {
    Residential,
    Downtown,
    Suburb,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

/// Per-slot rates of one zone for one kind of day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneProfile {
    /// Expected ride inquiries per slot (48 entries).
    pub inquiry_rate: Vec<f64>,
    /// Idle drivers available per slot (48 entries).
    pub supply: Vec<f64>,
    /// Destination-zone probabilities: one row for the whole day, or one per slot.
    pub destinations: Vec<Vec<f64>>,
}

impl ZoneProfile {
    pub fn destination_row(&self, slot: usize) -> &[f64] {
        if self.destinations.len() == 1 {
            &self.destinations[0]
        } else {
            &self.destinations[slot]
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub name: String,
    pub archetype: Archetype,
    pub center: LatLon,
    pub radius_m: f64,
    pub mean_fare: f64,
    /// Log-normal sigma of the fare around `mean_fare`.
    pub fare_dispersion: f64,
    pub cr: BetaParams,
    pub weekday: ZoneProfile,
    pub weekend: ZoneProfile,
}

impl Zone {
    pub fn profile(&self, kind: DayKind) -> &ZoneProfile {
        match kind {
            DayKind::Weekday => &self.weekday,
            DayKind::Weekend => &self.weekend,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandParams {
    pub base_ecr: BetaParams,
    /// Uniform range of the logistic price sensitivity.
    pub sensitivity_min: f64,
    pub sensitivity_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CityModel {
    pub name: String,
    pub bbox: BoundingBox,
    pub zones: Vec<Zone>,
    pub demand: DemandParams,
    /// Mixture weights of the historical discount policy over the menu.
    pub historical_policy: [f64; NUM_ACTIONS],
    pub speed_kmh: f64,
    pub detour_factor: f64,
    /// Extra pickup/ETA noise, uniform in `[0, eta_noise_minutes)`.
    pub eta_noise_minutes: f64,
}

fn beta_ok(b: &BetaParams) -> bool {
    b.alpha.is_finite() && b.beta.is_finite() && b.alpha > 0.0 && b.beta > 0.0
}

impl CityModel {
    pub fn validate(&self) -> Result<(), MarketError> {
        let err = |m: String| Err(MarketError::InvalidCity(m));
        if let Err(e) = self.bbox.validate() {
            return err(e.to_string());
        }
        if self.zones.is_empty() {
            return err("city has no zones".into());
        }
        let nz = self.zones.len();
        for z in &self.zones {
            if !self.bbox.contains(z.center.lat, z.center.lon) {
                return err(format!("zone {} center outside bounding box", z.name));
            }
            if !(z.radius_m > 0.0 && z.radius_m.is_finite()) {
                return err(format!("zone {} radius must be positive", z.name));
            }
            if !(z.mean_fare > 0.0 && z.mean_fare.is_finite()) {
                return err(format!("zone {} mean_fare must be positive", z.name));
            }
            if !(z.fare_dispersion >= 0.0 && z.fare_dispersion.is_finite()) {
                return err(format!("zone {} fare_dispersion must be non-negative", z.name));
            }
            if !beta_ok(&z.cr) {
                return err(format!("zone {} cr Beta parameters must be positive", z.name));
            }
            for (kind, p) in [("weekday", &z.weekday), ("weekend", &z.weekend)] {
                let ctx = format!("zone {} {kind}", z.name);
                if p.inquiry_rate.len() != SLOTS_PER_DAY as usize || p.supply.len() != SLOTS_PER_DAY as usize {
                    return err(format!("{ctx}: rates need 48 entries"));
                }
                if p.inquiry_rate.iter().chain(&p.supply).any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return err(format!("{ctx}: rates must be finite and non-negative"));
                }
                if p.destinations.len() != 1 && p.destinations.len() != SLOTS_PER_DAY as usize {
                    return err(format!("{ctx}: destinations need 1 or 48 rows"));
                }
                for row in &p.destinations {
                    if row.len() != nz || row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                        return err(format!("{ctx}: destination row must have {nz} non-negative entries"));
                    }
                    if (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                        return err(format!("{ctx}: destination mixture must sum to 1"));
                    }
                }
            }
        }
        if !beta_ok(&self.demand.base_ecr) {
            return err("base_ecr Beta parameters must be positive".into());
        }
        let (lo, hi) = (self.demand.sensitivity_min, self.demand.sensitivity_max);
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
            return err("price sensitivity range must satisfy 0 <= min <= max".into());
        }
        let w = &self.historical_policy;
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return err("historical_policy weights must be non-negative and sum to 1".into());
        }
        if !(self.speed_kmh > 0.0 && self.detour_factor >= 1.0 && self.eta_noise_minutes >= 0.0) {
            return err("speed must be positive, detour >= 1 and ETA noise >= 0".into());
        }
        Ok(())
    }

    /// Zone/slot pairs where the configured supply is below the inquiry rate.
    pub fn short_supply_slots(&self, kind: DayKind) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (zi, z) in self.zones.iter().enumerate() {
            let p = z.profile(kind);
            for s in 0..SLOTS_PER_DAY as usize {
                if p.supply[s] < p.inquiry_rate[s] {
                    out.push((zi, s));
                }
            }
        }
        out
    }

    /// Fraction of each zone's disc that falls in each finest-level cell.
    ///
    /// Computed on a fixed square lattice of sample points, so the result is
    /// deterministic. Points outside the bounding box are dropped, matching
    /// the generator which rejects them.
    pub fn zone_cell_shares(&self, grid: &HexGrid) -> Vec<BTreeMap<CellId, f64>> {
        const STEPS: i32 = 40;
        self.zones
            .iter()
            .map(|z| {
                let (cx, cy) = grid.projection().to_xy(z.center.lat, z.center.lon);
                let step = z.radius_m / STEPS as f64;
                let mut counts: BTreeMap<CellId, f64> = BTreeMap::new();
                let mut total = 0.0;
                for i in -STEPS..=STEPS {
                    for j in -STEPS..=STEPS {
                        let (dx, dy) = (i as f64 * step, j as f64 * step);
                        if dx.hypot(dy) > z.radius_m {
                            continue;
                        }
                        let p = grid.projection().to_latlon(cx + dx, cy + dy);
                        if let Ok(cell) = grid.locate(p.lat, p.lon, 0) {
                            *counts.entry(cell.cell_id).or_default() += 1.0;
                            total += 1.0;
                        }
                    }
                }
                counts.values_mut().for_each(|v| *v /= total);
                counts
            })
            .collect()
    }

    /// Idle-driver supply per finest cell and slot for one kind of day.
    pub fn cell_supply(&self, grid: &HexGrid, kind: DayKind) -> BTreeMap<CellId, [f64; SLOTS_PER_DAY as usize]> {
        let mut out: BTreeMap<CellId, [f64; SLOTS_PER_DAY as usize]> = BTreeMap::new();
        for (z, shares) in self.zones.iter().zip(self.zone_cell_shares(grid)) {
            let supply = &z.profile(kind).supply;
            for (cell, share) in shares {
                let row = out.entry(cell).or_insert([0.0; SLOTS_PER_DAY as usize]);
                for s in 0..SLOTS_PER_DAY as usize {
                    row[s] += share * supply[s];
                }
            }
        }
        out
    }
}
