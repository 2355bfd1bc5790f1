//! BBR (v1): Startup, Drain, ProbeBW gain cycling and ProbeRTT.

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{FullBwDetector, RtpropTracker, DRAIN_GAIN, HIGH_GAIN};
use super::{
    bdp_bytes, unknown, CcError, CcTelemetry, CcaKind, CongestionControl, INITIAL_CWND,
    MIN_CWND, MIN_PACING_RATE,
};
use crate::filter::WindowedFilter;
use crate::rtt::RttEstimator;
use crate::sampler::eligible_for_max_filter;
use crate::time::{Rate, SimTime, MSS};
use crate::transport::AckSummary;

/// ProbeBW pacing gains, one phase per rtprop.
pub const PROBE_BW_GAINS: [f64; 8] = [1.25, 0.75, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
pub const PROBE_RTT_DURATION: Duration = Duration::from_millis(200);

#[derive(Clone, Debug, PartialEq)]
pub struct Bbr1Params {
    pub cwnd_gain: f64,
    pub bw_window_rounds: u64,
    pub rtprop_validity: Duration,
}

impl Default for Bbr1Params {
    fn default() -> Self {
        Bbr1Params {
            cwnd_gain: 2.0,
            bw_window_rounds: 10,
            rtprop_validity: Duration::from_secs(10),
        }
    }
}

impl Bbr1Params {
    pub(crate) fn set(&mut self, name: &str, value: f64) -> Result<(), CcError> {
        match name {
            "cwnd_gain" if value > 0.0 => self.cwnd_gain = value,
            "bw_window_rounds" if value >= 1.0 => self.bw_window_rounds = value as u64,
            "rtprop_validity_s" if value > 0.0 => {
                self.rtprop_validity = Duration::from_secs_f64(value)
            }
            "cwnd_gain" | "bw_window_rounds" | "rtprop_validity_s" => {
                return Err(super::invalid(name, value, "must be positive"))
            }
            _ => return Err(unknown("bbr", name)),
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bbr1State {
    Startup,
    Drain,
    ProbeBw,
    ProbeRtt,
}

impl Bbr1State {
    pub fn name(self) -> &'static str {
        match self {
            Bbr1State::Startup => "Startup",
            Bbr1State::Drain => "Drain",
            Bbr1State::ProbeBw => "ProbeBW",
            Bbr1State::ProbeRtt => "ProbeRTT",
        }
    }
}

/// Whether a ProbeBW phase at `gain` that began `elapsed` ago is over.
/// Probing phases also wait for loss or for inflight to reach the probe
/// target; draining phases end early once inflight is back to one BDP.
pub fn phase_complete(
    gain: f64,
    elapsed: Duration,
    rtprop: Duration,
    had_loss: bool,
    prior_inflight: u64,
    bdp: f64,
) -> bool {
    let full_length = elapsed > rtprop;
    if gain > 1.0 {
        full_length && (had_loss || prior_inflight as f64 >= gain * bdp)
    } else if gain < 1.0 {
        full_length || prior_inflight as f64 <= bdp
    } else {
        full_length
    }
}

#[derive(Debug)]
pub struct Bbr1 {
    params: Bbr1Params,
    state: Bbr1State,
    pacing_gain: f64,
    cwnd_gain: f64,
    btlbw: WindowedFilter<Rate>,
    rtprop: RtpropTracker,
    full_bw: FullBwDetector,
    round: u64,
    cycle_index: usize,
    cycle_stamp: SimTime,
    probe_rtt_done_at: Option<SimTime>,
    probe_rtt_round: u64,
    prior_cwnd: u64,
    restore_after_round: Option<u64>,
    cwnd: u64,
    pacing_rate: Rate,
    /// Pacing is re-initialized from the first RTT sample.
    seen_rtt: bool,
    rng: ChaCha8Rng,
}

impl Bbr1 {
    pub fn new(params: Bbr1Params, seed: u64) -> Self {
        let btlbw = WindowedFilter::max(params.bw_window_rounds);
        let rtprop = RtpropTracker::new(params.rtprop_validity);
        Bbr1 {
            params,
            state: Bbr1State::Startup,
            pacing_gain: HIGH_GAIN,
            cwnd_gain: HIGH_GAIN,
            btlbw,
            rtprop,
            full_bw: FullBwDetector::default(),
            round: 0,
            cycle_index: 0,
            cycle_stamp: SimTime::ZERO,
            probe_rtt_done_at: None,
            probe_rtt_round: 0,
            prior_cwnd: 0,
            restore_after_round: None,
            cwnd: INITIAL_CWND,
            pacing_rate: initial_pacing(None),
            seen_rtt: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn state(&self) -> Bbr1State {
        self.state
    }

    pub fn pacing_gain(&self) -> f64 {
        self.pacing_gain
    }

    pub fn btlbw(&self) -> Option<Rate> {
        self.btlbw.current()
    }

    pub fn rtprop(&self) -> Option<Duration> {
        self.rtprop.get()
    }

    pub fn bdp(&self) -> Option<f64> {
        Some(bdp_bytes(self.btlbw()?, self.rtprop()?))
    }

    fn enter_probe_bw(&mut self, now: SimTime) {
        self.state = Bbr1State::ProbeBw;
        self.cwnd_gain = self.params.cwnd_gain;
        // Random starting phase, never the draining one.
        let start = self.rng.random_range(0..7usize);
        self.cycle_index = if start == 1 { 7 } else { start };
        self.pacing_gain = PROBE_BW_GAINS[self.cycle_index];
        self.cycle_stamp = now;
    }

    fn advance_cycle(&mut self, now: SimTime) {
        self.cycle_index = (self.cycle_index + 1) % PROBE_BW_GAINS.len();
        self.pacing_gain = PROBE_BW_GAINS[self.cycle_index];
        self.cycle_stamp = now;
    }

    fn update_state(&mut self, ack: &AckSummary, rtprop_expired: bool) {
        let now = ack.now;
        let bdp = self.bdp();

        if self.state == Bbr1State::ProbeBw {
            if let (Some(bdp), Some(rtprop)) = (bdp, self.rtprop()) {
                if phase_complete(
                    self.pacing_gain,
                    now.saturating_since(self.cycle_stamp),
                    rtprop,
                    ack.losses_declared > 0,
                    ack.prior_inflight,
                    bdp,
                ) {
                    self.advance_cycle(now);
                }
            }
        }

        if ack.round_start && self.state == Bbr1State::Startup {
            let app_limited = ack.bw_sample.is_some_and(|s| s.is_app_limited);
            if !app_limited && self.full_bw.on_round(self.btlbw().unwrap_or(Rate::ZERO)) {
                self.state = Bbr1State::Drain;
                self.pacing_gain = DRAIN_GAIN;
                self.cwnd_gain = HIGH_GAIN;
            }
        }
        if self.state == Bbr1State::Drain {
            if let Some(bdp) = bdp {
                if ack.inflight_bytes as f64 <= bdp {
                    self.enter_probe_bw(now);
                }
            }
        }

        if rtprop_expired && self.state != Bbr1State::ProbeRtt {
            self.state = Bbr1State::ProbeRtt;
            self.pacing_gain = 1.0;
            self.cwnd_gain = 1.0;
            self.prior_cwnd = self.prior_cwnd.max(self.cwnd);
            self.probe_rtt_done_at = None;
        }
        if self.state == Bbr1State::ProbeRtt {
            match self.probe_rtt_done_at {
                None if ack.inflight_bytes <= MIN_CWND => {
                    self.probe_rtt_done_at = Some(now + PROBE_RTT_DURATION);
                    self.probe_rtt_round = self.round;
                }
                Some(done) if now >= done && self.round > self.probe_rtt_round => {
                    self.rtprop.refresh(now);
                    self.cwnd = self.cwnd.max(self.prior_cwnd);
                    self.prior_cwnd = 0;
                    if self.full_bw.reached() {
                        self.enter_probe_bw(now);
                    } else {
                        self.state = Bbr1State::Startup;
                        self.pacing_gain = HIGH_GAIN;
                        self.cwnd_gain = HIGH_GAIN;
                    }
                }
                _ => {}
            }
        }
    }

    fn update_outputs(&mut self, ack: &AckSummary, rtt: &RttEstimator) {
        if !self.seen_rtt {
            if let Some(srtt) = rtt.srtt() {
                self.seen_rtt = true;
                self.pacing_rate = initial_pacing(Some(srtt));
            }
        }
        match self.btlbw() {
            Some(bw) => {
                let rate = bw * self.pacing_gain;
                if self.full_bw.reached() || rate > self.pacing_rate {
                    self.pacing_rate = rate;
                }
            }
            None => self.pacing_rate = initial_pacing(rtt.srtt()),
        }
        self.pacing_rate = self
            .pacing_rate
            .max(Rate::from_bytes_per_sec(MIN_PACING_RATE));

        if let Some(round) = self.restore_after_round {
            if self.round > round {
                self.cwnd = self.cwnd.max(self.prior_cwnd);
                self.prior_cwnd = 0;
                self.restore_after_round = None;
            }
        }
        let target = match self.bdp() {
            Some(bdp) => (bdp * self.cwnd_gain) as u64,
            None => INITIAL_CWND,
        };
        let acked = ack.newly_acked_bytes;
        if self.full_bw.reached() {
            self.cwnd = (self.cwnd + acked).min(target);
        } else if self.cwnd < target || ack.delivered_total < INITIAL_CWND {
            self.cwnd += acked;
        }
        self.cwnd = self.cwnd.max(MIN_CWND);
        if self.state == Bbr1State::ProbeRtt {
            self.cwnd = self.cwnd.min(MIN_CWND);
        }
    }
}

/// Pacing before any bandwidth sample: the initial window at high gain
/// over the smoothed RTT (1ms before any RTT sample).
pub(crate) fn initial_pacing(srtt: Option<Duration>) -> Rate {
    let rtt = srtt.unwrap_or(Duration::from_millis(1)).max(Duration::from_micros(1));
    Rate::from_bytes_over(INITIAL_CWND, rtt) * HIGH_GAIN
}

impl CongestionControl for Bbr1 {
    fn kind(&self) -> CcaKind {
        CcaKind::Bbr
    }

    fn on_ack(&mut self, ack: &AckSummary, rtt: &RttEstimator) {
        if ack.stale {
            return;
        }
        self.round = ack.round_count;
        if let Some(sample) = &ack.bw_sample {
            if eligible_for_max_filter(sample, self.btlbw()) {
                self.btlbw.update(sample.delivery_rate, self.round);
            }
        }
        let expired = self.rtprop.update(ack.rtt_sample, ack.now);
        self.update_state(ack, expired);
        self.update_outputs(ack, rtt);
    }

    fn on_rto(&mut self, _now: SimTime) {
        self.prior_cwnd = self.prior_cwnd.max(self.cwnd);
        self.cwnd = MIN_CWND;
        self.restore_after_round = Some(self.round);
    }

    fn cwnd(&self) -> u64 {
        self.cwnd.max(MSS)
    }

    fn pacing_rate(&self) -> Rate {
        self.pacing_rate
    }

    fn telemetry(&self) -> CcTelemetry {
        CcTelemetry {
            state: self.state.name(),
            pacing_gain: self.pacing_gain,
            btlbw: self.btlbw(),
            rtprop: self.rtprop(),
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gains_match_lifecycle_constants() {
        assert!((HIGH_GAIN - 2.885).abs() < 1e-3);
        assert!((DRAIN_GAIN - 0.347).abs() < 1e-3);
        assert_eq!(PROBE_BW_GAINS.iter().filter(|&&g| g == 1.0).count(), 6);
    }

    #[test]
    fn phase_sequence_over_full_cycle() {
        // With every phase running its full length, the gains visited from
        // phase 0 are the canonical cycle.
        let rtprop = Duration::from_millis(40);
        let bdp = 200_000.0;
        let mut idx = 0;
        let mut seen = vec![PROBE_BW_GAINS[idx]];
        for _ in 0..7 {
            let gain = PROBE_BW_GAINS[idx];
            let inflight = (gain * bdp) as u64;
            assert!(phase_complete(gain, rtprop + Duration::from_nanos(1), rtprop, false, inflight, bdp));
            idx = (idx + 1) % 8;
            seen.push(PROBE_BW_GAINS[idx]);
        }
        assert_eq!(seen, vec![1.25, 0.75, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn probe_phase_waits_for_target() {
        let rtprop = Duration::from_millis(40);
        let long = Duration::from_millis(50);
        assert!(!phase_complete(1.25, long, rtprop, false, 200_000, 200_000.0));
        assert!(phase_complete(1.25, long, rtprop, true, 200_000, 200_000.0));
        assert!(phase_complete(0.75, Duration::ZERO, rtprop, false, 150_000, 200_000.0));
    }

    #[test]
    fn probe_rtt_dwell_is_at_least_200ms() {
        let rtt = Duration::from_millis(40);
        assert_eq!(PROBE_RTT_DURATION.max(rtt), Duration::from_millis(200));
    }
}
