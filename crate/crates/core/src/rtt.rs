//! Smoothed RTT, RTT variation, and round-scoped minimum RTT tracking.

use std::time::Duration;

use crate::filter::WindowedFilter;
use crate::time::SimTime;

/// Lower bound on the retransmission timeout.
pub const MIN_RTO: Duration = Duration::from_millis(200);
/// RTO used before the first RTT sample.
pub const INITIAL_RTO: Duration = Duration::from_secs(1);
pub const MAX_RTO: Duration = Duration::from_secs(60);

const MIN_RTT_WINDOW: Duration = Duration::from_secs(10);

#[derive(Clone, Debug)]
pub struct RttEstimator {
    latest_rtt: Option<Duration>,
    srtt: Option<Duration>,
    rttvar: Duration,
    min_rtt_window: WindowedFilter<Duration>,
    minrtt_curr_round: Option<Duration>,
    minrtt_prev_round: Option<Duration>,
    samples: u64,
}

impl Default for RttEstimator {
    fn default() -> Self {
        Self::new()
    }
}

impl RttEstimator {
    pub fn new() -> Self {
        RttEstimator {
            latest_rtt: None,
            srtt: None,
            rttvar: Duration::ZERO,
            min_rtt_window: WindowedFilter::min(MIN_RTT_WINDOW.as_nanos() as u64),
            minrtt_curr_round: None,
            minrtt_prev_round: None,
            samples: 0,
        }
    }

    /// Feeds one RTT sample. Non-positive samples are dropped and `false` is
    /// returned.
    pub fn on_sample(&mut self, rtt: Duration, now: SimTime) -> bool {
        if rtt.is_zero() {
            return false;
        }
        self.samples += 1;
        self.latest_rtt = Some(rtt);
        match self.srtt {
            None => {
                self.srtt = Some(rtt);
                self.rttvar = rtt / 2;
            }
            Some(srtt) => {
                let err = srtt.abs_diff(rtt);
                self.rttvar = (self.rttvar * 3 + err) / 4;
                self.srtt = Some((srtt * 7 + rtt) / 8);
            }
        }
        self.min_rtt_window.update(rtt, now.as_nanos());
        self.minrtt_curr_round = Some(match self.minrtt_curr_round {
            Some(m) => m.min(rtt),
            None => rtt,
        });
        true
    }

    /// Closes the current round: its minimum becomes the previous-round
    /// minimum and the next sample opens a fresh round.
    pub fn on_round_start(&mut self) {
        if self.minrtt_curr_round.is_some() {
            self.minrtt_prev_round = self.minrtt_curr_round;
        }
        self.minrtt_curr_round = None;
    }

    pub fn latest_rtt(&self) -> Option<Duration> {
        self.latest_rtt
    }

    pub fn srtt(&self) -> Option<Duration> {
        self.srtt
    }

    pub fn rttvar(&self) -> Duration {
        self.rttvar
    }

    /// Minimum RTT over the last 10 seconds.
    pub fn min_rtt(&self) -> Option<Duration> {
        self.min_rtt_window.current()
    }

    pub fn minrtt_curr_round(&self) -> Option<Duration> {
        self.minrtt_curr_round
    }

    pub fn minrtt_prev_round(&self) -> Option<Duration> {
        self.minrtt_prev_round
    }

    pub fn sample_count(&self) -> u64 {
        self.samples
    }

    /// `srtt + 4 * rttvar` with a 200ms floor, doubled `backoff` times.
    pub fn rto(&self, backoff: u32) -> Duration {
        let base = match self.srtt {
            Some(srtt) => (srtt + self.rttvar * 4).max(MIN_RTO),
            None => INITIAL_RTO,
        };
        let factor = 1u32.checked_shl(backoff.min(16)).unwrap_or(u32::MAX);
        base.saturating_mul(factor).min(MAX_RTO)
    }
}
