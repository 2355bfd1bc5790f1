//! Cubic: slow start, then the cubic growth function around the window at
//! the last loss. Losses within one smoothed RTT of a reduction count as the
//! same loss event. The TCP-friendly region is not modeled.

use std::time::Duration;

use super::{invalid, unknown, CcError, CcTelemetry, CcaKind, CongestionControl};
use crate::rtt::RttEstimator;
use crate::time::{Rate, SimTime, MSS};
use crate::transport::{AckSummary, LossEvent};

/// Smallest Cubic window, in packets.
pub const MIN_WINDOW_PKTS: f64 = 2.0;
const INITIAL_WINDOW_PKTS: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct CubicParams {
    pub c: f64,
    pub beta: f64,
}

impl Default for CubicParams {
    fn default() -> Self {
        CubicParams { c: 0.4, beta: 0.7 }
    }
}

impl CubicParams {
    pub(crate) fn set(&mut self, name: &str, value: f64) -> Result<(), CcError> {
        match name {
            "c" => self.c = value,
            "beta" => self.beta = value,
            _ => return Err(unknown("cubic", name)),
        }
        self.validate()
    }

    pub(crate) fn validate(&self) -> Result<(), CcError> {
        if !(self.c > 0.0) {
            return Err(invalid("c", self.c, "must be positive"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(invalid("beta", self.beta, "must be in (0, 1)"));
        }
        Ok(())
    }
}

/// Time for the window to return to `w_max` after a reduction:
/// `cbrt(w_max * (1 - beta) / c)` seconds.
pub fn cubic_k(w_max: f64, c: f64, beta: f64) -> f64 {
    (w_max * (1.0 - beta) / c).cbrt()
}

/// `C * (t - K)^3 + W_max` packets, floored at two packets.
pub fn cubic_window(w_max: f64, k: f64, c: f64, t: f64) -> f64 {
    (c * (t - k).powi(3) + w_max).max(MIN_WINDOW_PKTS)
}

#[derive(Clone, Debug)]
pub struct Cubic {
    params: CubicParams,
    /// Window in packets.
    cwnd: f64,
    ssthresh: f64,
    w_max: f64,
    k: f64,
    epoch_start: Option<SimTime>,
    last_reduction: Option<SimTime>,
    srtt: Option<Duration>,
    min_rtt: Option<Duration>,
}

impl Cubic {
    pub fn new(params: CubicParams) -> Self {
        Cubic {
            params,
            cwnd: INITIAL_WINDOW_PKTS,
            ssthresh: f64::INFINITY,
            w_max: 0.0,
            k: 0.0,
            epoch_start: None,
            last_reduction: None,
            srtt: None,
            min_rtt: None,
        }
    }

    pub fn cwnd_pkts(&self) -> f64 {
        self.cwnd
    }

    pub fn w_max(&self) -> f64 {
        self.w_max
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn in_slow_start(&self) -> bool {
        self.cwnd < self.ssthresh
    }

    /// Multiplicative decrease for a loss event at `now`. Returns false if
    /// the loss was coalesced into the previous event.
    pub fn on_loss_event(&mut self, now: SimTime) -> bool {
        if let (Some(last), Some(srtt)) = (self.last_reduction, self.srtt) {
            if now.saturating_since(last) < srtt {
                return false;
            }
        }
        self.reduce(now);
        true
    }

    fn reduce(&mut self, now: SimTime) {
        self.w_max = self.cwnd;
        self.k = cubic_k(self.w_max, self.params.c, self.params.beta);
        // Whole packets after a reduction, as a segment-counting stack does.
        self.cwnd = (self.cwnd * self.params.beta + 1e-9).floor().max(MIN_WINDOW_PKTS);
        self.ssthresh = self.cwnd;
        self.epoch_start = None;
        self.last_reduction = Some(now);
    }

    fn grow(&mut self, now: SimTime, acked_pkts: f64) {
        if self.cwnd < self.ssthresh {
            self.cwnd = (self.cwnd + acked_pkts).min(self.ssthresh.max(self.cwnd));
            if self.cwnd < self.ssthresh {
                return;
            }
        }
        let epoch = *self.epoch_start.get_or_insert_with(|| {
            if self.cwnd >= self.w_max {
                self.w_max = self.cwnd;
                self.k = 0.0;
            }
            now
        });
        let delay = self.min_rtt.unwrap_or_default();
        let t = (now.saturating_since(epoch) + delay).as_secs_f64();
        let target = cubic_window(self.w_max, self.k, self.params.c, t);
        if target > self.cwnd {
            self.cwnd += (target - self.cwnd) / self.cwnd * acked_pkts;
        } else {
            self.cwnd += 0.01 / self.cwnd * acked_pkts;
        }
    }
}

impl CongestionControl for Cubic {
    fn kind(&self) -> CcaKind {
        CcaKind::Cubic
    }

    fn on_loss_declared(&mut self, loss: &LossEvent) {
        if loss.from_rto {
            return;
        }
        self.on_loss_event(loss.now);
    }

    fn on_ack(&mut self, ack: &AckSummary, rtt: &RttEstimator) {
        self.srtt = rtt.srtt();
        self.min_rtt = rtt.min_rtt();
        if ack.stale || ack.newly_acked_bytes == 0 {
            return;
        }
        self.grow(ack.now, ack.newly_acked_bytes as f64 / MSS as f64);
    }

    fn on_rto(&mut self, now: SimTime) {
        self.w_max = self.cwnd;
        self.k = cubic_k(self.w_max, self.params.c, self.params.beta);
        self.ssthresh = (self.cwnd * self.params.beta).max(MIN_WINDOW_PKTS);
        self.cwnd = MIN_WINDOW_PKTS;
        self.epoch_start = None;
        self.last_reduction = Some(now);
    }

    fn cwnd(&self) -> u64 {
        (self.cwnd * MSS as f64) as u64
    }

    fn pacing_rate(&self) -> Rate {
        match self.srtt {
            Some(srtt) if !srtt.is_zero() => {
                let gain = if self.in_slow_start() { 2.0 } else { 1.2 };
                Rate::from_bytes_per_sec(gain * self.cwnd * MSS as f64 / srtt.as_secs_f64())
            }
            _ => Rate::INFINITE,
        }
    }

    fn telemetry(&self) -> CcTelemetry {
        CcTelemetry {
            state: if self.in_slow_start() { "SlowStart" } else { "CongAvoid" },
            pacing_gain: 1.0,
            ..Default::default()
        }
    }
}
