use super::city::CityModel;
use super::trip::{TripRecord, SEGMENT_MINUTES};
use super::{MarketError, TRIP_CELL_EDGE_M};
use crate::action::Action;
use crate::geo::{HexGrid, LatLon};
use crate::time::{DayKind, SLOTS_PER_DAY, SLOT_MINUTES};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

/// Kinds of day to simulate, in calendar order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayPlan(pub Vec<DayKind>);

impl DayPlan {
    /// Five weekdays followed by a weekend.
    pub fn week() -> DayPlan {
        let mut days = vec![DayKind::Weekday; 5];
        days.extend([DayKind::Weekend; 2]);
        DayPlan(days)
    }

    pub fn single(kind: DayKind) -> DayPlan {
        DayPlan(vec![kind])
    }
}

/// Seed of the independent random stream owned by one simulated day.
pub fn day_seed(seed: u64, day: u32) -> u64 {
    crate::split_seed(seed, u64::from(day))
}

/// Samples a synthetic trip log. Each day draws from its own stream, so the
/// result depends only on `(seed, city, days)`.
pub fn generate_city(seed: u64, city: &CityModel, days: &DayPlan) -> Result<Vec<TripRecord>, MarketError> {
    city.validate()?;
    let grid = HexGrid::new(city.bbox, vec![TRIP_CELL_EDGE_M]).map_err(|e| MarketError::InvalidCity(e.to_string()))?;
    generate_with_grid(seed, city, days, &grid)
}

/// Like [`generate_city`] but locates cells on the finest level of `grid`.
pub fn generate_with_grid(
    seed: u64,
    city: &CityModel,
    days: &DayPlan,
    grid: &HexGrid,
) -> Result<Vec<TripRecord>, MarketError> {
    city.validate()?;
    let sampler = Sampler::new(city)?;
    let mut trips = Vec::new();
    for (day, &kind) in days.0.iter().enumerate() {
        let day = day as u32;
        let mut rng = ChaCha8Rng::seed_from_u64(day_seed(seed, day));
        let mut counter = 0u64;
        for slot in 0..SLOTS_PER_DAY as usize {
            for (zi, zone) in city.zones.iter().enumerate() {
                let rate = zone.profile(kind).inquiry_rate[slot];
                if rate <= 0.0 {
                    continue;
                }
                let n =
                    Poisson::new(rate).map_err(|e| MarketError::InvalidCity(e.to_string()))?.sample(&mut rng) as u64;
                for _ in 0..n {
                    let trip_id = (u64::from(day) << 32) | counter;
                    counter += 1;
                    trips.push(sampler.trip(&mut rng, grid, trip_id, day, kind, slot, zi)?);
                }
            }
        }
    }
    Ok(trips)
}

struct Sampler<'a> {
    city: &'a CityModel,
    base_ecr: Beta<f64>,
    cr: Vec<Beta<f64>>,
    fares: Vec<LogNormal<f64>>,
    historical: WeightedIndex<f64>,
}

impl<'a> Sampler<'a> {
    fn new(city: &'a CityModel) -> Result<Sampler<'a>, MarketError> {
        let bad = |e: &dyn std::fmt::Display| MarketError::InvalidCity(e.to_string());
        let b = &city.demand.base_ecr;
        Ok(Sampler {
            city,
            base_ecr: Beta::new(b.alpha, b.beta).map_err(|e| bad(&e))?,
            cr: city
                .zones
                .iter()
                .map(|z| Beta::new(z.cr.alpha, z.cr.beta).map_err(|e| bad(&e)))
                .collect::<Result<_, _>>()?,
            fares: city
                .zones
                .iter()
                .map(|z| {
                    let s = z.fare_dispersion;
                    LogNormal::new(z.mean_fare.ln() - 0.5 * s * s, s).map_err(|e| bad(&e))
                })
                .collect::<Result<_, _>>()?,
            historical: WeightedIndex::new(city.historical_policy).map_err(|e| bad(&e))?,
        })
    }

    fn point_in_zone(&self, rng: &mut ChaCha8Rng, grid: &HexGrid, zone: usize) -> LatLon {
        let z = &self.city.zones[zone];
        let (cx, cy) = grid.projection().to_xy(z.center.lat, z.center.lon);
        loop {
            let r = z.radius_m * rng.random::<f64>().sqrt();
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let p = grid.projection().to_latlon(cx + r * theta.cos(), cy + r * theta.sin());
            if grid.bbox().contains(p.lat, p.lon) {
                return p;
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn trip(
        &self,
        rng: &mut ChaCha8Rng,
        grid: &HexGrid,
        trip_id: u64,
        day: u32,
        kind: DayKind,
        slot: usize,
        origin_zone: usize,
    ) -> Result<TripRecord, MarketError> {
        let geo = |e: crate::geo::GeoError| MarketError::InvalidCity(e.to_string());
        let zone = &self.city.zones[origin_zone];
        let request_time = slot as u32 * SLOT_MINUTES + rng.random_range(0..SLOT_MINUTES);
        let dest_zone = WeightedIndex::new(zone.profile(kind).destination_row(slot))
            .map_err(|e| MarketError::InvalidCity(e.to_string()))?
            .sample(rng);
        let from = self.point_in_zone(rng, grid, origin_zone);
        let to = self.point_in_zone(rng, grid, dest_zone);
        let (x0, y0) = grid.projection().to_xy(from.lat, from.lon);
        let (x1, y1) = grid.projection().to_xy(to.lat, to.lon);
        let km = (x1 - x0).hypot(y1 - y0) / 1000.0;
        let eta = km * self.city.detour_factor / self.city.speed_kmh * 60.0
            + self.city.eta_noise_minutes * rng.random::<f64>();
        let est_travel_slots = ((eta / SEGMENT_MINUTES as f64).ceil() as u32).max(1);
        let fare = (self.fares[origin_zone].sample(rng) * 100.0).round() / 100.0;
        let base_ecr = self.base_ecr.sample(rng).clamp(0.01, 0.95);
        let (lo, hi) = (self.city.demand.sensitivity_min, self.city.demand.sensitivity_max);
        let price_sensitivity = if hi > lo { rng.random_range(lo..hi) } else { lo };
        let cr = self.cr[origin_zone].sample(rng).clamp(0.05, 1.0);
        let historical_action = Action::from_index(self.historical.sample(rng)).expect("menu index");
        Ok(TripRecord {
            trip_id,
            day,
            day_kind: kind,
            origin: grid.locate(from.lat, from.lon, 0).map_err(geo)?.cell_id,
            dest: grid.locate(to.lat, to.lon, 0).map_err(geo)?.cell_id,
            origin_zone: origin_zone as u16,
            dest_zone: dest_zone as u16,
            request_time,
            est_travel_slots,
            fare: fare.max(1.0),
            base_ecr,
            price_sensitivity,
            cr,
            historical_action,
        })
    }
}
