//! Simulated time and rate primitives.

use std::fmt;
use std::ops::{Add, Mul};
use std::time::Duration;

/// Maximum segment size used by every flow, in bytes.
pub const MSS: u64 = 1500;

/// A point in simulated time, nanoseconds since the start of the run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub fn from_secs_f64(s: f64) -> Self {
        SimTime((s * 1e9).round().max(0.0) as u64)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-9
    }

    /// Adds a duration, returning `None` on overflow.
    pub fn checked_add(self, d: Duration) -> Option<SimTime> {
        let ns = u64::try_from(d.as_nanos()).ok()?;
        self.0.checked_add(ns).map(SimTime)
    }

    /// Time elapsed since `earlier`, zero if `earlier` is in the future.
    pub fn saturating_since(self, earlier: SimTime) -> Duration {
        Duration::from_nanos(self.0.saturating_sub(earlier.0))
    }
}

impl Add<Duration> for SimTime {
    type Output = SimTime;

    /// Panics on overflow; simulated clocks never approach `u64::MAX` ns.
    fn add(self, d: Duration) -> SimTime {
        self.checked_add(d).expect("simulated time overflow")
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.as_secs_f64())
    }
}

/// A data rate in bytes per second.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd)]
pub struct Rate(f64);

impl Rate {
    pub const ZERO: Rate = Rate(0.0);
    pub const INFINITE: Rate = Rate(f64::INFINITY);

    pub fn from_bytes_per_sec(bps: f64) -> Self {
        Rate(bps.max(0.0))
    }

    pub fn from_mbps(mbps: f64) -> Self {
        Rate((mbps * 1e6 / 8.0).max(0.0))
    }

    /// Rate implied by moving `bytes` in `d`; zero for an empty interval.
    pub fn from_bytes_over(bytes: u64, d: Duration) -> Self {
        let secs = d.as_secs_f64();
        if secs <= 0.0 {
            Rate::ZERO
        } else {
            Rate(bytes as f64 / secs)
        }
    }

    pub fn bytes_per_sec(self) -> f64 {
        self.0
    }

    pub fn mbps(self) -> f64 {
        self.0 * 8.0 / 1e6
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    /// Time needed to serialize `bytes` at this rate.
    pub fn transmit_time(self, bytes: u64) -> Duration {
        if self.0 <= 0.0 || !self.0.is_finite() {
            return Duration::ZERO;
        }
        Duration::from_secs_f64(bytes as f64 / self.0)
    }

    /// Bytes carried over `d` at this rate (the bandwidth-delay product).
    pub fn bytes_in(self, d: Duration) -> f64 {
        self.0 * d.as_secs_f64()
    }

    pub fn min(self, other: Rate) -> Rate {
        if other.0 < self.0 {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: Rate) -> Rate {
        if other.0 > self.0 {
            other
        } else {
            self
        }
    }
}

impl Mul<f64> for Rate {
    type Output = Rate;

    fn mul(self, gain: f64) -> Rate {
        Rate((self.0 * gain).max(0.0))
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}Mbps", self.mbps())
    }
}
