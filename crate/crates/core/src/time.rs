//! Semi-hour time slots and the weekday/weekend split.

use serde::{Deserialize, Serialize};

pub const SLOT_MINUTES: u32 = 30;
pub const SLOTS_PER_DAY: u32 = 48;
pub const MINUTES_PER_DAY: u32 = 1440;
/// Episodes run from 03:00 to 03:00 of the next calendar day.
pub const EPISODE_BOUNDARY_MINUTE: u32 = 180;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayKind {
    Weekday,
    Weekend,
}

impl DayKind {
    pub fn as_u8(self) -> u8 {
        match self {
            DayKind::Weekday => 0,
            DayKind::Weekend => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<DayKind> {
        match v {
            0 => Some(DayKind::Weekday),
            1 => Some(DayKind::Weekend),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DayKind::Weekday => "weekday",
            DayKind::Weekend => "weekend",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeSlot {
    pub day_kind: DayKind,
    pub index: u8,
}

impl TimeSlot {
    pub fn new(index: u32, day_kind: DayKind) -> Option<TimeSlot> {
        (index < SLOTS_PER_DAY).then_some(TimeSlot { day_kind, index: index as u8 })
    }

    /// Slot containing `minutes` after midnight. Minutes past the end of the day wrap.
    pub fn from_minutes(minutes: u32, day_kind: DayKind) -> TimeSlot {
        let m = minutes % MINUTES_PER_DAY;
        TimeSlot { day_kind, index: (m / SLOT_MINUTES) as u8 }
    }

    pub fn index(self) -> u32 {
        self.index as u32
    }

    pub fn start_minute(self) -> u32 {
        self.index() * SLOT_MINUTES
    }

    /// "HH:MM" of the slot start.
    pub fn label(self) -> String {
        let m = self.start_minute();
        format!("{:02}:{:02}", m / 60, m % 60)
    }
}

/// True when the half-open trip interval `(start, end]` contains an 03:00 boundary.
///
/// `start` is minutes after midnight of the request day; `end` may run past 1440.
pub fn crosses_episode_boundary(start: u32, end: u32) -> bool {
    if end <= start {
        return false;
    }
    // first boundary strictly after start
    let base = start - start % MINUTES_PER_DAY;
    let mut boundary = base + EPISODE_BOUNDARY_MINUTE;
    if boundary <= start {
        boundary += MINUTES_PER_DAY;
    }
    boundary <= end
}
