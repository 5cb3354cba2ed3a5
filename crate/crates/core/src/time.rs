//! Simulated time as fixed-point ticks of 10^-9 time units.
//!
//! Every time value entering the kernel is rounded once, so `(fire_time, seq)`
//! ordering never depends on floating-point tie behaviour.

use core::fmt;
use core::ops::Add;

use serde::{Deserialize, Serialize};

/// Ticks per simulated time unit.
pub const TICKS_PER_UNIT: u64 = 1_000_000_000;

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    /// Rounds a non-negative duration in time units to the nearest tick.
    /// Negative and NaN inputs clamp to zero.
    pub fn from_units(units: f64) -> Self {
        SimTime(units_to_ticks(units))
    }

    pub fn as_units(self) -> f64 {
        self.0 as f64 / TICKS_PER_UNIT as f64
    }

    pub const fn ticks(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

/// Round-half-up conversion of time units to ticks.
pub fn units_to_ticks(units: f64) -> u64 {
    if units.is_nan() || units <= 0.0 {
        return 0;
    }
    let scaled = units * TICKS_PER_UNIT as f64;
    if scaled >= u64::MAX as f64 {
        return u64::MAX;
    }
    libm::floor(scaled + 0.5) as u64
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}.{:09}",
            self.0 / TICKS_PER_UNIT,
            self.0 % TICKS_PER_UNIT
        )
    }
}
