//! Path-model pieces shared by the BBR family.

use std::time::Duration;

use crate::time::{Rate, SimTime};

/// Startup gain, `2 / ln 2`.
pub const HIGH_GAIN: f64 = 2.0 / std::f64::consts::LN_2;
/// Drain gain, `ln 2 / 2`, the inverse of the startup gain.
pub const DRAIN_GAIN: f64 = std::f64::consts::LN_2 / 2.0;

/// Detects the Startup bandwidth plateau: the estimate grew less than 25%
/// for three consecutive rounds.
#[derive(Clone, Debug, Default)]
pub struct FullBwDetector {
    full_bw: Rate,
    count: u32,
    reached: bool,
}

impl FullBwDetector {
    pub const GROWTH: f64 = 1.25;
    pub const ROUNDS: u32 = 3;

    pub fn reached(&self) -> bool {
        self.reached
    }

    pub fn set_reached(&mut self) {
        self.reached = true;
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    /// Feeds the estimate at a round boundary; returns true once the
    /// plateau is detected.
    pub fn on_round(&mut self, btlbw: Rate) -> bool {
        if self.reached {
            return true;
        }
        if btlbw >= self.full_bw * Self::GROWTH {
            self.full_bw = btlbw;
            self.count = 0;
            return false;
        }
        self.count += 1;
        if self.count >= Self::ROUNDS {
            self.reached = true;
        }
        self.reached
    }
}

/// Minimum RTT held for a validity period. Once stale, it is replaced by
/// the smallest sample seen since it was last set, even if larger.
#[derive(Clone, Debug)]
pub struct RtpropTracker {
    value: Option<Duration>,
    stamp: SimTime,
    validity: Duration,
    window_min: Option<Duration>,
}

impl RtpropTracker {
    pub fn new(validity: Duration) -> Self {
        RtpropTracker {
            value: None,
            stamp: SimTime::ZERO,
            validity,
            window_min: None,
        }
    }

    pub fn get(&self) -> Option<Duration> {
        self.value
    }

    pub fn is_expired(&self, now: SimTime) -> bool {
        self.value.is_some() && now.saturating_since(self.stamp) > self.validity
    }

    /// Returns whether the estimate had expired before this sample.
    pub fn update(&mut self, sample: Option<Duration>, now: SimTime) -> bool {
        let expired = self.is_expired(now);
        if let Some(rtt) = sample {
            let window_min = self.window_min.map_or(rtt, |m| m.min(rtt));
            if self.value.is_none_or(|v| rtt < v) {
                self.set(rtt, now);
            } else if expired {
                self.set(window_min, now);
            } else {
                self.window_min = Some(window_min);
            }
        }
        expired
    }

    fn set(&mut self, rtt: Duration, now: SimTime) {
        self.value = Some(rtt);
        self.stamp = now;
        self.window_min = None;
    }

    /// Restarts the validity period without changing the value.
    pub fn refresh(&mut self, now: SimTime) {
        self.stamp = now;
    }
}
