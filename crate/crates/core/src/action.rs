//! The discrete discount menu and small helpers around it.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Fare multipliers, deepest discount first. Index 5 is "no discount".
pub const MENU: [f64; 6] = [0.75, 0.8, 0.85, 0.9, 0.95, 1.0];

pub const NUM_ACTIONS: usize = MENU.len();

/// Index of the zero-cost, no-discount action.
pub const NO_DISCOUNT: Action = Action(5);

/// A menu entry, stored as its index into [`MENU`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Action(u8);

impl Action {
    pub fn from_index(index: usize) -> Option<Action> {
        (index < NUM_ACTIONS).then_some(Action(index as u8))
    }

    /// Looks up a multiplier on the menu. Values within 1e-9 of an entry match.
    pub fn from_multiplier(a: f64) -> Option<Action> {
        MENU.iter().position(|m| (m - a).abs() < 1e-9).map(|i| Action(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn multiplier(self) -> f64 {
        MENU[self.0 as usize]
    }

    /// Fraction of the fare given away, `1 - a`.
    pub fn discount(self) -> f64 {
        1.0 - self.multiplier()
    }

    pub fn all() -> impl Iterator<Item = Action> {
        (0..NUM_ACTIONS as u8).map(Action)
    }
}

impl TryFrom<f64> for Action {
    type Error = String;

    fn try_from(a: f64) -> Result<Self, Self::Error> {
        Action::from_multiplier(a).ok_or_else(|| format!("action {a} is not on the discount menu"))
    }
}

impl From<Action> for f64 {
    fn from(a: Action) -> f64 {
        a.multiplier()
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.multiplier())
    }
}

/// Bitmask over the menu.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ActionSet(u8);

impl ActionSet {
    pub const EMPTY: ActionSet = ActionSet(0);
    pub const FULL: ActionSet = ActionSet((1 << NUM_ACTIONS) - 1);

    pub fn insert(&mut self, a: Action) {
        self.0 |= 1 << a.0;
    }

    pub fn contains(self, a: Action) -> bool {
        self.0 & (1 << a.0) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = Action> {
        Action::all().filter(move |a| self.contains(*a))
    }
}

impl FromIterator<Action> for ActionSet {
    fn from_iter<I: IntoIterator<Item = Action>>(iter: I) -> Self {
        let mut set = ActionSet::EMPTY;
        for a in iter {
            set.insert(a);
        }
        set
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn menu_lookup() {
        assert_eq!(Action::from_multiplier(0.9).unwrap().index(), 3);
        assert_eq!(Action::from_multiplier(1.0), Some(NO_DISCOUNT));
        assert!(Action::from_multiplier(0.7).is_none());
        assert!((Action::from_index(0).unwrap().discount() - 0.25).abs() < 1e-15);
        assert!(Action::from_index(6).is_none());
    }

    #[test]
    fn serde_as_multiplier() {
        let a = Action::from_index(1).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), "0.8");
        let back: Action = serde_json::from_str("0.8").unwrap();
        assert_eq!(back, a);
        assert!(serde_json::from_str::<Action>("0.5").is_err());
    }

    #[test]
    fn action_set_ops() {
        let set: ActionSet = [0usize, 2].iter().map(|&i| Action::from_index(i).unwrap()).collect();
        assert_eq!(set.len(), 2);
        assert!(set.contains(Action::from_index(2).unwrap()));
        assert!(!set.contains(NO_DISCOUNT));
        assert_eq!(ActionSet::FULL.len(), NUM_ACTIONS);
        assert!(ActionSet::EMPTY.is_empty());
    }
}
