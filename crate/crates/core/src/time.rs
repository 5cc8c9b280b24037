//! Simulation clock.
//!
//! Time is kept as an integer tick count so that event ordering, window
//! arithmetic and energy accrual are exact. One abstract time unit is
//! [`TICKS_PER_UNIT`] ticks.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

pub const TICKS_PER_UNIT: u64 = 1000;

/// A point in (or span of) simulated time, in ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    /// Converts abstract time units to ticks, rounding to the nearest tick.
    /// Negative and non-finite inputs clamp to zero.
    pub fn from_units(units: f64) -> SimTime {
        if !units.is_finite() || units <= 0.0 {
            return SimTime::ZERO;
        }
        SimTime((units * TICKS_PER_UNIT as f64).round() as u64)
    }

    pub fn as_units(self) -> f64 {
        self.0 as f64 / TICKS_PER_UNIT as f64
    }

    pub fn ticks(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_units())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_conversion_round_trips() {
        assert_eq!(SimTime::from_units(1.0), SimTime(1000));
        assert_eq!(SimTime::from_units(0.2), SimTime(200));
        assert_eq!(SimTime(12_345).as_units(), 12.345);
        assert_eq!(SimTime::from_units(-3.0), SimTime::ZERO);
        assert_eq!(SimTime::from_units(f64::NAN), SimTime::ZERO);
    }
}
