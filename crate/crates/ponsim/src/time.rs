//! Integer nanosecond time base.
//!
//! Every quantity the scheduler reasons about (frame boundaries, guard gaps,
//! tuning penalties, grant starts) is an exact number of nanoseconds, so all
//! comparisons and table updates are integer arithmetic. Transmission times
//! round up: a grant never ends before its payload has drained.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

/// A point in time or a span, in nanoseconds.
///
/// Signed so that differences (delays, margins) are expressible, but every
/// value produced by the simulator is non-negative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeNs(pub i64);

impl TimeNs {
    pub const ZERO: TimeNs = TimeNs(0);

    pub const fn ns(self) -> i64 {
        self.0
    }

    /// Scales a span by an integer count (e.g. whole frames).
    pub const fn times(self, n: i64) -> TimeNs {
        TimeNs(self.0 * n)
    }

    pub fn max(self, other: TimeNs) -> TimeNs {
        if self.0 >= other.0 {
            self
        } else {
            other
        }
    }
}

impl Add for TimeNs {
    type Output = TimeNs;
    fn add(self, rhs: TimeNs) -> TimeNs {
        TimeNs(self.0 + rhs.0)
    }
}

impl AddAssign for TimeNs {
    fn add_assign(&mut self, rhs: TimeNs) {
        self.0 += rhs.0;
    }
}

impl Sub for TimeNs {
    type Output = TimeNs;
    fn sub(self, rhs: TimeNs) -> TimeNs {
        TimeNs(self.0 - rhs.0)
    }
}

impl fmt::Display for TimeNs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// Bits per second of a channel or of the aggregate system.
pub type BitsPerSec = u64;

/// Transmission time of `bits` at `rate`, rounded up to whole nanoseconds.
///
/// Exact integer arithmetic: ceil(bits * 1e9 / rate).
pub fn transmission_time(bits: u64, rate: BitsPerSec) -> TimeNs {
    assert!(rate > 0, "channel rate must be positive");
    let num = bits as u128 * 1_000_000_000u128;
    let den = rate as u128;
    TimeNs(num.div_ceil(den) as i64)
}
