//! Superdense simulation time.
//!
//! Time is fixed-point (integer nanoseconds) so that event ordering is exact
//! and runs are reproducible. A microstep index orders simultaneous events:
//! effects of an event processed at `(s, m)` become visible at `(s, m + 1)`,
//! and the microstep resets to zero whenever the second count advances.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const NANOS_PER_SEC: u64 = 1_000_000_000;

/// A point on the simulation timeline: `(seconds, microstep)`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SimTime {
    nanos: u64,
    microstep: u32,
}

impl SimTime {
    pub const ZERO: SimTime = SimTime { nanos: 0, microstep: 0 };

    pub fn from_nanos(nanos: u64) -> Self {
        SimTime { nanos, microstep: 0 }
    }

    /// Nearest-nanosecond conversion. Negative input clamps to zero.
    pub fn from_secs_f64(secs: f64) -> Self {
        if secs <= 0.0 {
            return SimTime::ZERO;
        }
        let nanos = (secs * NANOS_PER_SEC as f64).round();
        // Saturate instead of wrapping for +inf / absurd horizons.
        let nanos = if nanos >= u64::MAX as f64 { u64::MAX } else { nanos as u64 };
        SimTime { nanos, microstep: 0 }
    }

    pub fn nanos(&self) -> u64 {
        self.nanos
    }

    pub fn microstep(&self) -> u32 {
        self.microstep
    }

    /// Time in seconds as f64 (exact for horizons below ~104 days).
    pub fn as_secs_f64(&self) -> f64 {
        self.nanos as f64 / NANOS_PER_SEC as f64
    }

    pub fn with_microstep(self, microstep: u32) -> Self {
        SimTime { nanos: self.nanos, microstep }
    }

    /// The immediately following microstep at the same second count.
    pub fn next_microstep(self) -> Self {
        SimTime { nanos: self.nanos, microstep: self.microstep + 1 }
    }

    pub fn add_nanos(self, nanos: u64) -> Self {
        SimTime { nanos: self.nanos.saturating_add(nanos), microstep: 0 }
    }

    pub fn add_secs_f64(self, secs: f64) -> Self {
        let delta = (secs * NANOS_PER_SEC as f64).round().max(0.0);
        let delta = if delta >= u64::MAX as f64 { u64::MAX } else { delta as u64 };
        self.add_nanos(delta)
    }
}

impl fmt::Debug for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s+{}", self.as_secs_f64(), self.microstep)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s+{}", self.as_secs_f64(), self.microstep)
    }
}
