//! The shipped synthetic city: one downtown, two residential districts and a
//! suburb, with commuting peaks that leave residential cells short of
//! drivers in the weekday morning and downtown short in the evening.

use super::city::{Archetype, BetaParams, CityModel, DemandParams, Zone, ZoneProfile};
use crate::geo::{BoundingBox, LatLon};

const DOWNTOWN: usize = 0;
const RES_NORTH: usize = 1;
const RES_EAST: usize = 2;

fn hour(slot: usize) -> f64 {
    slot as f64 * 0.5 + 0.25
}

fn bump(slot: usize, center_h: f64, sigma_h: f64) -> f64 {
    let z = (hour(slot) - center_h) / sigma_h;
    (-0.5 * z * z).exp()
}

/// Damps the 01:00-06:00 base rate.
fn night(slot: usize) -> f64 {
    if (1.0..6.0).contains(&hour(slot)) {
        0.3
    } else {
        1.0
    }
}

fn per_slot(f: impl Fn(usize) -> f64) -> Vec<f64> {
    (0..48).map(|s| (f(s) * 1000.0).round() / 1000.0).collect()
}

fn windowed(inside: [f64; 4], outside: [f64; 4], from_h: f64, to_h: f64) -> Vec<Vec<f64>> {
    (0..48).map(|s| if (from_h..to_h).contains(&hour(s)) { inside.to_vec() } else { outside.to_vec() }).collect()
}

impl CityModel {
    pub fn standard() -> CityModel {
        let bbox = BoundingBox { min_lat: 30.55, max_lat: 30.75, min_lon: 104.0, max_lon: 104.2 };

        let downtown = Zone {
            name: "downtown".into(),
            archetype: Archetype::Downtown,
            center: LatLon { lat: 30.655, lon: 104.075 },
            radius_m: 2500.0,
            mean_fare: 20.0,
            fare_dispersion: 0.35,
            cr: BetaParams { alpha: 9.0, beta: 2.0 },
            weekday: ZoneProfile {
                inquiry_rate: per_slot(|s| {
                    20.0 * night(s) + 25.0 * bump(s, 8.5, 1.0) + 45.0 * bump(s, 12.5, 1.5) + 150.0 * bump(s, 18.5, 1.2)
                }),
                supply: per_slot(|s| 60.0 + 110.0 * bump(s, 9.0, 1.2) + 30.0 * bump(s, 13.0, 2.0)),
                destinations: windowed([0.10, 0.35, 0.35, 0.20], [0.40, 0.22, 0.22, 0.16], 16.0, 21.0),
            },
            weekend: ZoneProfile {
                inquiry_rate: per_slot(|s| 15.0 * night(s) + 90.0 * bump(s, 15.0, 3.0) + 90.0 * bump(s, 21.5, 1.5)),
                supply: per_slot(|s| 70.0 + 30.0 * bump(s, 12.0, 2.0)),
                destinations: vec![vec![0.35, 0.25, 0.25, 0.15]],
            },
        };

        let residential = |name: &str, center: LatLon, own: usize, other: usize| {
            let mix = |d: f64, o: f64, x: f64, sub: f64| {
                let mut row = [0.0; 4];
                row[DOWNTOWN] = d;
                row[own] = o;
                row[other] = x;
                row[3] = sub;
                row
            };
            Zone {
                name: name.into(),
                archetype: Archetype::Residential,
                center,
                radius_m: 2200.0,
                mean_fare: 28.0,
                fare_dispersion: 0.35,
                cr: BetaParams { alpha: 6.0, beta: 2.0 },
                weekday: ZoneProfile {
                    inquiry_rate: per_slot(|s| 10.0 * night(s) + 140.0 * bump(s, 8.0, 1.0) + 35.0 * bump(s, 20.5, 1.5)),
                    supply: per_slot(|s| 25.0 + 70.0 * bump(s, 19.0, 1.5)),
                    destinations: windowed(mix(0.70, 0.08, 0.12, 0.10), mix(0.40, 0.25, 0.20, 0.15), 6.0, 10.0),
                },
                weekend: ZoneProfile {
                    inquiry_rate: per_slot(|s| 8.0 * night(s) + 60.0 * bump(s, 11.0, 2.0) + 20.0 * bump(s, 17.0, 2.0)),
                    supply: per_slot(|s| 30.0 + 30.0 * bump(s, 23.0, 2.0)),
                    destinations: vec![mix(0.50, 0.15, 0.20, 0.15).to_vec()],
                },
            }
        };

        let suburb = Zone {
            name: "suburb-south".into(),
            archetype: Archetype::Suburb,
            center: LatLon { lat: 30.585, lon: 104.11 },
            radius_m: 3500.0,
            mean_fare: 35.0,
            fare_dispersion: 0.35,
            cr: BetaParams { alpha: 5.0, beta: 3.0 },
            weekday: ZoneProfile {
                inquiry_rate: per_slot(|s| 6.0 * night(s) + 25.0 * bump(s, 7.75, 1.0) + 15.0 * bump(s, 18.0, 1.5)),
                supply: per_slot(|_| 45.0),
                destinations: windowed([0.60, 0.12, 0.12, 0.16], [0.35, 0.20, 0.20, 0.25], 6.0, 10.0),
            },
            weekend: ZoneProfile {
                inquiry_rate: per_slot(|s| 5.0 * night(s) + 15.0 * bump(s, 12.0, 3.0)),
                supply: per_slot(|_| 40.0),
                destinations: vec![vec![0.40, 0.20, 0.20, 0.20]],
            },
        };

        CityModel {
            name: "standard".into(),
            bbox,
            zones: vec![
                downtown,
                residential("residential-north", LatLon { lat: 30.715, lon: 104.06 }, RES_NORTH, RES_EAST),
                residential("residential-east", LatLon { lat: 30.635, lon: 104.155 }, RES_EAST, RES_NORTH),
                suburb,
            ],
            demand: DemandParams {
                base_ecr: BetaParams { alpha: 2.0, beta: 14.0 },
                sensitivity_min: 1.0,
                sensitivity_max: 3.5,
            },
            historical_policy: [0.08, 0.10, 0.01, 0.02, 0.02, 0.77],
            speed_kmh: 25.0,
            detour_factor: 1.3,
            eta_noise_minutes: 6.0,
        }
    }
}
