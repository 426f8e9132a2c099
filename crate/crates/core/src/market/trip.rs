use super::MarketError;
use crate::action::{Action, NO_DISCOUNT};
use crate::geo::CellId;
use crate::time::{DayKind, TimeSlot, MINUTES_PER_DAY};
use serde::{Deserialize, Serialize};

/// Length of one travel segment in minutes. `est_travel_slots` counts these.
pub const SEGMENT_MINUTES: u32 = 10;

/// One historical ride inquiry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub trip_id: u64,
    /// Calendar day index within the log.
    pub day: u32,
    pub day_kind: DayKind,
    pub origin: CellId,
    pub dest: CellId,
    pub origin_zone: u16,
    pub dest_zone: u16,
    /// Minutes after midnight of `day`.
    pub request_time: u32,
    /// Estimated travel time in 10-minute segments.
    pub est_travel_slots: u32,
    /// Quoted fare before discount.
    pub fare: f64,
    pub base_ecr: f64,
    pub price_sensitivity: f64,
    pub cr: f64,
    pub historical_action: Action,
}

impl TripRecord {
    pub fn validate(&self) -> Result<(), MarketError> {
        let bad = |why: &str| Err(MarketError::InvalidTrip { trip_id: self.trip_id, reason: why.to_string() });
        if !(self.fare.is_finite() && self.fare > 0.0) {
            return bad("fare must be positive");
        }
        if !(self.base_ecr > 0.0 && self.base_ecr < 1.0) {
            return bad("base_ecr must lie in (0, 1)");
        }
        if !(self.cr > 0.0 && self.cr <= 1.0) {
            return bad("cr must lie in (0, 1]");
        }
        if !(self.price_sensitivity.is_finite() && self.price_sensitivity >= 0.0) {
            return bad("price_sensitivity must be finite and non-negative");
        }
        if self.est_travel_slots == 0 {
            return bad("est_travel_slots must be at least 1");
        }
        if self.request_time >= MINUTES_PER_DAY {
            return bad("request_time must be before midnight");
        }
        Ok(())
    }

    pub fn request_slot(&self) -> TimeSlot {
        TimeSlot::from_minutes(self.request_time, self.day_kind)
    }

    pub fn travel_minutes(&self) -> u32 {
        self.est_travel_slots * SEGMENT_MINUTES
    }

    /// Minutes after midnight of `day` at drop-off; may exceed one day.
    pub fn arrival_minute(&self) -> u32 {
        self.request_time + self.travel_minutes()
    }

    /// Day index and slot of the drop-off. The day kind of the request day is kept.
    pub fn arrival(&self) -> (u32, TimeSlot) {
        let end = self.arrival_minute();
        (self.day + end / MINUTES_PER_DAY, TimeSlot::from_minutes(end, self.day_kind))
    }

    /// Conversion probability from inquiry to request under action `a`.
    ///
    /// `logit(ecr(a)) = logit(base_ecr) + price_sensitivity * (1 - a)`.
    pub fn ecr(&self, a: Action) -> f64 {
        let shift = self.price_sensitivity * a.discount();
        if a == NO_DISCOUNT || shift == 0.0 {
            return self.base_ecr;
        }
        let logit = (self.base_ecr / (1.0 - self.base_ecr)).ln() + shift;
        logistic(logit).min(1.0 - f64::EPSILON)
    }

    /// Menu-checked variant of [`TripRecord::ecr`].
    pub fn ecr_at(&self, multiplier: f64) -> Result<f64, MarketError> {
        let a = Action::from_multiplier(multiplier).ok_or(MarketError::NotOnMenu(multiplier))?;
        Ok(self.ecr(a))
    }

    /// Increase in conversion probability over no discount.
    pub fn delta_ecr(&self, a: Action) -> f64 {
        self.ecr(a) - self.base_ecr
    }

    pub fn delta_ecr_at(&self, multiplier: f64) -> Result<f64, MarketError> {
        Ok(self.ecr_at(multiplier)? - self.base_ecr)
    }

    /// Discount spend `(1 - a) * fare`.
    pub fn cost(&self, a: Action) -> f64 {
        a.discount() * self.fare
    }

    /// Expected GMV contribution `fare * ecr(a) * cr * a`.
    pub fn expected_gmv(&self, a: Action) -> f64 {
        self.fare * self.ecr(a) * self.cr * a.multiplier()
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::trip;
    use super::*;

    fn act(a: f64) -> Action {
        Action::from_multiplier(a).unwrap()
    }

    #[test]
    fn no_discount_returns_base_exactly() {
        let t = trip(40.0, 0.3137, 2.5);
        assert_eq!(t.ecr(NO_DISCOUNT), 0.3137);
        assert_eq!(t.delta_ecr(NO_DISCOUNT), 0.0);
    }

    #[test]
    fn zero_sensitivity_is_flat() {
        let t = trip(40.0, 0.42, 0.0);
        for a in Action::all() {
            assert_eq!(t.ecr(a), 0.42);
        }
    }

    #[test]
    fn logistic_evaluation() {
        // logit(0.5) = 0, shift = 4 * 0.25 = 1
        let t = trip(40.0, 0.5, 4.0);
        let expected = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((t.ecr(act(0.75)) - expected).abs() < 1e-15);
        assert!((t.ecr(act(0.75)) - 0.731_058_578_630_004_9).abs() < 1e-15);
    }

    #[test]
    fn worked_example_delta() {
        // sensitivity tuned so that a 10% discount lifts ecr from 0.5 to 0.65
        let k = 10.0 * (0.65f64 / 0.35).ln();
        let t = trip(40.0, 0.5, k);
        assert!((t.delta_ecr(act(0.9)) - 0.15).abs() < 1e-12);
    }

    #[test]
    fn off_menu_is_error() {
        let t = trip(40.0, 0.5, 1.0);
        assert!(matches!(t.ecr_at(0.7), Err(MarketError::NotOnMenu(_))));
        assert!(t.delta_ecr_at(0.85).unwrap() > 0.0);
    }

    #[test]
    fn strictly_monotone_in_depth() {
        let t = trip(40.0, 0.2, 1.7);
        let ecrs: Vec<f64> = Action::all().map(|a| t.ecr(a)).collect();
        assert!(ecrs.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn validation() {
        let mut t = trip(40.0, 0.5, 1.0);
        assert!(t.validate().is_ok());
        t.fare = 0.0;
        assert!(t.validate().is_err());
        let mut t = trip(40.0, 1.0, 1.0);
        assert!(t.validate().is_err());
        t.base_ecr = 0.5;
        t.est_travel_slots = 0;
        assert!(t.validate().is_err());
    }

    #[test]
    fn arrival_slot_from_segments() {
        let mut t = trip(40.0, 0.5, 1.0);
        t.request_time = 600;
        t.est_travel_slots = 4;
        assert_eq!(t.arrival(), (0, TimeSlot::from_minutes(640, DayKind::Weekday)));
        t.request_time = 1430;
        assert_eq!(t.arrival().0, 1);
        assert_eq!(t.arrival().1.index, 1);
    }
}
