//! BBRv2: Startup, Drain, ProbeBW as {Cruise, Refill, Up, Down}, ProbeRTT,
//! with loss-driven bounds `inflight_hi`, `inflight_lo` and `bw_lo`.
//!
//! The engine also hosts BBRv2+, whose extra state lives in
//! [`PlusState`](super::bbr2plus) and whose hooks are marked below.

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bbr1::initial_pacing;
use super::bbr2plus::{
    compensated_bdp, continue_probing, probe_try_aborts, should_advance_filter, Bbr2PlusParams,
    PlusState, ProbeBwMode,
};
use super::model::{FullBwDetector, RtpropTracker, DRAIN_GAIN, HIGH_GAIN};
use super::{
    bdp_bytes, invalid, unknown, CcError, CcTelemetry, CcaKind, CongestionControl, INITIAL_CWND,
    MIN_CWND, MIN_PACING_RATE,
};
use crate::filter::WindowedFilter;
use crate::rtt::RttEstimator;
use crate::sampler::eligible_for_max_filter;
use crate::time::{Rate, SimTime, MSS};
use crate::transport::{AckSummary, RoundSummary};

pub const PROBE_UP_GAIN: f64 = 1.25;
pub const PROBE_DOWN_GAIN: f64 = 0.75;
pub const PROBE_RTT_DURATION: Duration = Duration::from_millis(200);
/// Losses a Startup round needs, beside exceeding `alpha`, to end Startup.
pub const STARTUP_FULL_LOSS_COUNT: u64 = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Bbr2Params {
    pub alpha: f64,
    pub beta: f64,
    pub headroom: f64,
    pub cwnd_gain: f64,
    pub probe_rtt_cwnd_gain: f64,
    pub rtprop_validity: Duration,
}

impl Default for Bbr2Params {
    fn default() -> Self {
        Bbr2Params {
            alpha: 0.02,
            beta: 0.3,
            headroom: 0.85,
            cwnd_gain: 2.0,
            probe_rtt_cwnd_gain: 0.5,
            rtprop_validity: Duration::from_secs(5),
        }
    }
}

impl Bbr2Params {
    pub(crate) fn set(&mut self, name: &str, value: f64) -> Result<(), CcError> {
        match name {
            "alpha" => self.alpha = value,
            "beta" => self.beta = value,
            "headroom" => self.headroom = value,
            "cwnd_gain" => self.cwnd_gain = value,
            "probe_rtt_cwnd_gain" => self.probe_rtt_cwnd_gain = value,
            "rtprop_validity_s" if value > 0.0 => {
                self.rtprop_validity = Duration::from_secs_f64(value)
            }
            "rtprop_validity_s" => return Err(invalid(name, value, "must be positive")),
            _ => return Err(unknown("bbr2", name)),
        }
        self.validate()
    }

    pub(crate) fn validate(&self) -> Result<(), CcError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(invalid("alpha", self.alpha, "must be in (0, 1]"));
        }
        if !(self.beta >= 0.0 && self.beta < 1.0) {
            return Err(invalid("beta", self.beta, "must be in [0, 1)"));
        }
        if !(self.headroom > 0.0 && self.headroom <= 1.0) {
            return Err(invalid("headroom", self.headroom, "must be in (0, 1]"));
        }
        if !(self.cwnd_gain > 0.0) {
            return Err(invalid("cwnd_gain", self.cwnd_gain, "must be positive"));
        }
        if !(self.probe_rtt_cwnd_gain > 0.0) {
            return Err(invalid(
                "probe_rtt_cwnd_gain",
                self.probe_rtt_cwnd_gain,
                "must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Bbr2State {
    Startup,
    Drain,
    ProbeCruise,
    ProbeRefill,
    ProbeUp,
    ProbeDown,
    /// BBRv2+ only.
    ProbeTry,
    ProbeRtt,
}

impl Bbr2State {
    pub fn name(self) -> &'static str {
        match self {
            Bbr2State::Startup => "Startup",
            Bbr2State::Drain => "Drain",
            Bbr2State::ProbeCruise => "ProbeCruise",
            Bbr2State::ProbeRefill => "ProbeRefill",
            Bbr2State::ProbeUp => "ProbeUp",
            Bbr2State::ProbeDown => "ProbeDown",
            Bbr2State::ProbeTry => "ProbeTry",
            Bbr2State::ProbeRtt => "ProbeRTT",
        }
    }

    pub fn in_probe_bw(self) -> bool {
        matches!(
            self,
            Bbr2State::ProbeCruise
                | Bbr2State::ProbeRefill
                | Bbr2State::ProbeUp
                | Bbr2State::ProbeDown
                | Bbr2State::ProbeTry
        )
    }
}

/// Cruise dwell before the next probe: `min(rand(2,3) s, bdp_pkts * rtt)`.
pub fn probe_wait(rand_secs: f64, bdp_pkts: f64, rtt: Duration) -> Duration {
    Duration::from_secs_f64(rand_secs.min(bdp_pkts * rtt.as_secs_f64()).max(0.0))
}

/// Multiplicative decrease of a lower bound after a lossy round:
/// `max((1 - beta) * bound, latest)`, seeding an unset bound from `seed`.
pub fn lower_bound_on_loss(bound: Option<f64>, seed: f64, latest: f64, beta: f64) -> f64 {
    let base = bound.unwrap_or(seed);
    ((1.0 - beta) * base).max(latest)
}

#[derive(Debug)]
pub struct Bbr2 {
    params: Bbr2Params,
    state: Bbr2State,
    pacing_gain: f64,
    cwnd_gain: f64,
    /// Max over the current and previous ProbeBW cycle.
    btlbw: WindowedFilter<Rate>,
    cycle_count: u64,
    rtprop: RtpropTracker,
    full_bw: FullBwDetector,

    inflight_hi: Option<u64>,
    inflight_lo: Option<u64>,
    bw_lo: Option<Rate>,
    bw_latest: Rate,
    inflight_latest: u64,
    /// Highest inflight seen during a ProbeUp episode.
    probe_up_inflight: u64,
    /// Last round whose losses are charged to the most recent probe.
    probe_feedback_round: Option<u64>,
    /// Raise of `inflight_hi` applied once the probe's ACKs come back clean.
    pending_hi: Option<u64>,
    /// Bytes declared lost since the current round started.
    round_lost: u64,

    round: u64,
    state_start: SimTime,
    state_round: u64,
    cruise_start: SimTime,
    probe_wait: Duration,

    probe_rtt_done_at: Option<SimTime>,
    probe_rtt_round: u64,
    prior_cwnd: u64,
    restore_after_round: Option<u64>,

    cwnd: u64,
    pacing_rate: Rate,
    /// Pacing is re-initialized from the first RTT sample.
    seen_rtt: bool,
    rng: ChaCha8Rng,
    plus: Option<PlusState>,
}

impl Bbr2 {
    pub fn new(params: Bbr2Params, seed: u64) -> Self {
        let rtprop = RtpropTracker::new(params.rtprop_validity);
        Bbr2 {
            params,
            state: Bbr2State::Startup,
            pacing_gain: HIGH_GAIN,
            cwnd_gain: HIGH_GAIN,
            btlbw: WindowedFilter::max(2),
            cycle_count: 0,
            rtprop,
            full_bw: FullBwDetector::default(),
            inflight_hi: None,
            inflight_lo: None,
            bw_lo: None,
            bw_latest: Rate::ZERO,
            inflight_latest: 0,
            probe_up_inflight: 0,
            probe_feedback_round: None,
            pending_hi: None,
            round_lost: 0,
            round: 0,
            state_start: SimTime::ZERO,
            state_round: 0,
            cruise_start: SimTime::ZERO,
            probe_wait: Duration::from_secs(2),
            probe_rtt_done_at: None,
            probe_rtt_round: 0,
            prior_cwnd: 0,
            restore_after_round: None,
            cwnd: INITIAL_CWND,
            pacing_rate: initial_pacing(None),
            seen_rtt: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
            plus: None,
        }
    }

    pub(crate) fn new_plus(p: Bbr2PlusParams, seed: u64) -> Self {
        let mut engine = Bbr2::new(
            Bbr2Params {
                alpha: p.alpha,
                beta: p.beta,
                ..Bbr2Params::default()
            },
            seed,
        );
        engine.plus = Some(PlusState::new(p));
        engine
    }

    pub(crate) fn plus(&self) -> Option<&PlusState> {
        self.plus.as_ref()
    }

    pub fn plus_mode(&self) -> Option<ProbeBwMode> {
        self.plus.as_ref().map(PlusState::mode)
    }

    fn plus_active(&self) -> bool {
        self.plus_mode() == Some(ProbeBwMode::Plus)
    }

    pub fn state(&self) -> Bbr2State {
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

    pub fn inflight_hi(&self) -> Option<u64> {
        self.inflight_hi
    }

    pub fn inflight_lo(&self) -> Option<u64> {
        self.inflight_lo
    }

    pub fn bw_lo(&self) -> Option<Rate> {
        self.bw_lo
    }

    pub fn cycle_count(&self) -> u64 {
        self.cycle_count
    }

    /// Path BDP in bytes; jitter-compensated for BBRv2+.
    pub fn bdp(&self) -> Option<f64> {
        let bw = self.btlbw()?;
        let rtprop = self.rtprop()?;
        Some(match &self.plus {
            Some(ps) => compensated_bdp(bw, rtprop, ps.max4rtt_jitter().unwrap_or_default(), ps.p.mu),
            None => bdp_bytes(bw, rtprop),
        })
    }

    fn set_state(&mut self, state: Bbr2State, gain: f64, now: SimTime) {
        self.state = state;
        self.pacing_gain = gain;
        self.state_start = now;
        self.state_round = self.round;
        if let Some(ps) = self.plus.as_mut() {
            ps.cycle_max_gain = ps.cycle_max_gain.max(gain);
        }
    }

    fn reset_lower_bounds(&mut self) {
        self.inflight_lo = None;
        self.bw_lo = None;
    }

    fn enter_startup(&mut self, now: SimTime) {
        self.full_bw.reset();
        self.inflight_hi = None;
        self.reset_lower_bounds();
        self.cwnd_gain = HIGH_GAIN;
        self.set_state(Bbr2State::Startup, HIGH_GAIN, now);
    }

    fn enter_drain(&mut self, now: SimTime) {
        self.cwnd_gain = HIGH_GAIN;
        self.set_state(Bbr2State::Drain, DRAIN_GAIN, now);
    }

    fn draw_probe_wait(&mut self) {
        let r: f64 = self.rng.random_range(2.0..3.0);
        let bdp_pkts = self.bdp().unwrap_or(0.0) / MSS as f64;
        let rtt = self.rtprop().unwrap_or_default();
        self.probe_wait = probe_wait(r, bdp_pkts, rtt);
    }

    fn enter_probe_down(&mut self, now: SimTime, gain: f64) {
        if matches!(self.state, Bbr2State::ProbeUp | Bbr2State::ProbeTry) {
            self.probe_feedback_round = Some(self.round + 1);
        }
        self.cwnd_gain = self.params.cwnd_gain;
        self.draw_probe_wait();
        self.set_state(Bbr2State::ProbeDown, gain, now);
    }

    fn enter_cruise(&mut self, now: SimTime) {
        self.cycle_count += 1;
        self.cwnd_gain = self.params.cwnd_gain;
        self.cruise_start = now;
        if let Some(ps) = self.plus.as_mut() {
            ps.close_cycle();
            ps.minrtt_curr_cruise = None;
            ps.cruise_rounds_done = 0;
        }
        self.set_state(Bbr2State::ProbeCruise, 1.0, now);
    }

    fn enter_refill(&mut self, now: SimTime) {
        self.reset_lower_bounds();
        self.set_state(Bbr2State::ProbeRefill, 1.0, now);
    }

    fn enter_probe_up(&mut self, now: SimTime) {
        self.probe_up_inflight = 0;
        self.set_state(Bbr2State::ProbeUp, PROBE_UP_GAIN, now);
    }

    fn enter_probe_try(&mut self, now: SimTime) {
        self.reset_lower_bounds();
        let gain = match self.plus.as_mut() {
            Some(ps) => {
                ps.try_round = 1;
                ps.p.try_gain
            }
            None => 1.0,
        };
        self.set_state(Bbr2State::ProbeTry, gain, now);
    }

    /// Leaves cruise (or a stalled ProbeDown) for the next bandwidth probe.
    fn start_probe(&mut self, now: SimTime) {
        if let (Some(ps), Some(rtprop)) = (self.plus.as_mut(), self.rtprop.get()) {
            if self.state == Bbr2State::ProbeCruise && ps.p.dual_mode {
                if let Some(m) = ps.minrtt_curr_cruise {
                    if let Some(mode) = ps.dual.on_cruise_end(m, rtprop, &ps.p) {
                        ps.mode_switches += 1;
                        if mode == ProbeBwMode::V2 {
                            ps.close_cycle();
                            self.enter_startup(now);
                            return;
                        }
                    }
                }
            }
        }
        if self.plus_active() {
            self.enter_probe_try(now);
        } else {
            self.enter_refill(now);
        }
    }

    fn on_lossy_round(&mut self, round: &RoundSummary, inflight_now: u64) {
        let responds = matches!(
            self.state,
            Bbr2State::Drain | Bbr2State::ProbeDown | Bbr2State::ProbeCruise | Bbr2State::ProbeRtt
        );
        if round.lost_packets == 0 || !responds {
            return;
        }
        let beta = self.params.beta;
        let lo = lower_bound_on_loss(
            self.inflight_lo.map(|v| v as f64),
            self.cwnd as f64,
            inflight_now as f64,
            beta,
        );
        self.inflight_lo = Some(lo as u64);
        if let Some(btlbw) = self.btlbw() {
            let bw = lower_bound_on_loss(
                self.bw_lo.map(Rate::bytes_per_sec),
                btlbw.bytes_per_sec(),
                self.bw_latest.bytes_per_sec(),
                beta,
            );
            self.bw_lo = Some(Rate::from_bytes_per_sec(bw));
        }
    }

    /// Excessive loss caused by a bandwidth probe: cap inflight at the
    /// current level and stop probing.
    fn on_probe_too_high(&mut self, ack: &AckSummary) {
        self.inflight_hi = Some(ack.prior_inflight);
        self.pending_hi = None;
        self.probe_feedback_round = None;
        if matches!(self.state, Bbr2State::ProbeUp | Bbr2State::ProbeTry) {
            self.enter_probe_down(ack.now, PROBE_DOWN_GAIN);
            self.probe_feedback_round = None;
        }
    }

    /// Per-ACK check while a probe or its feedback is in flight: losses
    /// this round exceeding `alpha` of the inflight volume end the probe.
    fn check_probe_loss(&mut self, ack: &AckSummary) {
        let probing = matches!(self.state, Bbr2State::ProbeUp | Bbr2State::ProbeTry)
            || self.probe_feedback_round.is_some();
        if probing
            && ack.lost_bytes > 0
            && self.round_lost as f64 > self.params.alpha * ack.prior_inflight as f64
        {
            self.on_probe_too_high(ack);
        }
    }

    fn on_round_end(&mut self, ack: &AckSummary, round: &RoundSummary) {
        let now = ack.now;
        self.on_lossy_round(round, ack.inflight_bytes);
        let loss_rate = round.loss_rate();
        let too_high = loss_rate > self.params.alpha;

        if let Some(last) = self.probe_feedback_round {
            if matches!(self.state, Bbr2State::ProbeDown | Bbr2State::ProbeCruise) {
                if too_high {
                    self.on_probe_too_high(ack);
                } else if round.round >= last {
                    if let (Some(hi), Some(raise)) = (self.inflight_hi, self.pending_hi) {
                        self.inflight_hi = Some(hi.max(raise));
                    }
                    self.pending_hi = None;
                    self.probe_feedback_round = None;
                }
            } else {
                self.pending_hi = None;
                self.probe_feedback_round = None;
            }
        }

        match self.state {
            Bbr2State::Startup => {
                let app_limited = ack.bw_sample.is_some_and(|s| s.is_app_limited);
                let plateau =
                    !app_limited && self.full_bw.on_round(self.btlbw().unwrap_or(Rate::ZERO));
                let lossy = round.lost_packets >= STARTUP_FULL_LOSS_COUNT
                    && loss_rate > self.params.alpha;
                if lossy {
                    self.full_bw.set_reached();
                    let bdp = self.bdp().unwrap_or(0.0) as u64;
                    self.inflight_hi = Some(bdp.max(self.inflight_latest));
                }
                if plateau || lossy {
                    self.enter_drain(now);
                }
            }
            Bbr2State::ProbeUp if too_high => self.on_probe_too_high(ack),
            Bbr2State::ProbeRefill => {
                if self.round > self.state_round {
                    self.enter_probe_up(now);
                }
            }
            Bbr2State::ProbeTry if too_high => self.on_probe_too_high(ack),
            Bbr2State::ProbeTry => self.on_try_round_end(round, now),
            Bbr2State::ProbeCruise => {
                let done = self.plus.as_mut().map(|ps| {
                    ps.cruise_rounds_done += 1;
                    ps.cruise_rounds_done >= ps.p.cruise_rounds
                });
                if done == Some(true) && self.plus_active() {
                    self.start_probe(now);
                }
            }
            _ => {}
        }

        // Filter advancement, evaluated once per round on its minimum RTT.
        if self.plus_active()
            && matches!(self.state, Bbr2State::ProbeCruise | Bbr2State::ProbeDown)
        {
            if let (Some(min_rtt), Some(rtprop)) = (round.min_rtt, self.rtprop()) {
                let ps = self.plus.as_mut().expect("plus mode implies plus state");
                if should_advance_filter(min_rtt, rtprop, ps.p.theta)
                    && ps.last_expiry_round != Some(round.round)
                {
                    ps.last_expiry_round = Some(round.round);
                    ps.filter_expiries += 1;
                    self.btlbw.expire_oldest();
                }
            }
        }

        self.bw_latest = Rate::ZERO;
        self.inflight_latest = 0;
    }

    fn on_try_round_end(&mut self, round: &RoundSummary, now: SimTime) {
        let Some(ps) = self.plus.as_mut() else {
            return;
        };
        // Round 3 carries the ACKs of packets sent in round 2, the first
        // round whose samples can show a queue left by the 1.1 gain.
        if ps.try_round < 3 {
            ps.try_round += 1;
            self.pacing_gain = 1.0;
            return;
        }
        let (curr, prev) = match (round.min_rtt, round.prev_min_rtt) {
            (Some(c), Some(p)) => (c, p),
            _ => (Duration::MAX, Duration::ZERO),
        };
        if probe_try_aborts(curr, prev, ps.p.gamma) {
            ps.try_aborted = true;
            let gain = ps.p.try_drain_gain;
            self.enter_probe_down(now, gain);
        } else {
            ps.minrtt_before_probe = Some(curr);
            self.enter_probe_up(now);
        }
    }

    fn check_transitions(&mut self, ack: &AckSummary, rtt: &RttEstimator) {
        let now = ack.now;
        let inflight = ack.inflight_bytes;
        let bdp = self.bdp();
        match self.state {
            Bbr2State::Drain => {
                if bdp.is_some_and(|b| inflight as f64 <= b) {
                    self.enter_probe_down(now, PROBE_DOWN_GAIN);
                }
            }
            Bbr2State::ProbeDown => {
                let Some(bdp) = bdp else { return };
                let after_try = self.plus.as_ref().is_some_and(|ps| ps.try_aborted);
                let target = if after_try {
                    bdp
                } else {
                    match self.inflight_hi {
                        Some(hi) => bdp.min(self.params.headroom * hi as f64),
                        None => bdp,
                    }
                };
                if inflight as f64 <= target {
                    self.enter_cruise(now);
                } else if now.saturating_since(self.state_start) >= self.probe_wait {
                    self.enter_cruise(now);
                    self.start_probe(now);
                }
            }
            Bbr2State::ProbeCruise => {
                if !self.plus_active() && now.saturating_since(self.cruise_start) >= self.probe_wait {
                    self.start_probe(now);
                }
            }
            Bbr2State::ProbeUp => {
                self.probe_up_inflight = self.probe_up_inflight.max(ack.prior_inflight);
                let (Some(bdp), Some(rtprop)) = (bdp, self.rtprop()) else {
                    return;
                };
                let reached = ack.prior_inflight as f64 >= PROBE_UP_GAIN * bdp
                    && now.saturating_since(self.state_start) >= rtprop;
                if !reached {
                    return;
                }
                // Raised once the probe's own ACKs show no excessive loss.
                self.pending_hi = Some(self.probe_up_inflight);
                let again = self.plus_active()
                    && match (
                        rtt.minrtt_curr_round().or(rtt.minrtt_prev_round()),
                        self.plus.as_ref().and_then(|ps| ps.minrtt_before_probe),
                    ) {
                        (Some(curr), Some(before)) => {
                            continue_probing(curr, before, self.plus.as_ref().unwrap().p.gamma)
                        }
                        _ => false,
                    };
                if again {
                    self.enter_probe_up(now);
                } else {
                    self.enter_probe_down(now, PROBE_DOWN_GAIN);
                }
            }
            _ => {}
        }
    }

    fn probe_rtt_cwnd(&self) -> u64 {
        let bdp = self.bdp().unwrap_or(0.0);
        ((self.params.probe_rtt_cwnd_gain * bdp) as u64).max(MIN_CWND)
    }

    fn check_probe_rtt(&mut self, ack: &AckSummary, expired: bool) {
        let now = ack.now;
        if expired && self.state != Bbr2State::ProbeRtt {
            self.prior_cwnd = self.prior_cwnd.max(self.cwnd);
            self.probe_rtt_done_at = None;
            self.cwnd_gain = 1.0;
            self.set_state(Bbr2State::ProbeRtt, 1.0, now);
        }
        if self.state != Bbr2State::ProbeRtt {
            return;
        }
        match self.probe_rtt_done_at {
            None if ack.inflight_bytes <= self.probe_rtt_cwnd() => {
                self.probe_rtt_done_at = Some(now + PROBE_RTT_DURATION);
                self.probe_rtt_round = self.round;
            }
            Some(done) if now >= done && self.round > self.probe_rtt_round => {
                self.rtprop.refresh(now);
                self.cwnd = self.cwnd.max(self.prior_cwnd);
                self.prior_cwnd = 0;
                self.reset_lower_bounds();
                if self.full_bw.reached() {
                    self.enter_cruise(now);
                } else {
                    self.enter_startup(now);
                }
            }
            _ => {}
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
                let mut rate = bw * self.pacing_gain;
                if let Some(lo) = self.bw_lo {
                    rate = rate.min(lo);
                }
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
        if let Some(cap) = self.inflight_cap() {
            self.cwnd = self.cwnd.min(cap);
        }
        self.cwnd = self.cwnd.max(MIN_CWND);
        if self.state == Bbr2State::ProbeRtt {
            self.cwnd = self.cwnd.min(self.probe_rtt_cwnd());
        }
    }

    /// Bounds beyond the gain-scaled BDP: `headroom * inflight_hi` while
    /// cruising and `inflight_lo` whenever set.
    fn inflight_cap(&self) -> Option<u64> {
        let hi = match (self.state, self.inflight_hi) {
            (Bbr2State::ProbeCruise, Some(hi)) => Some((self.params.headroom * hi as f64) as u64),
            _ => None,
        };
        match (hi, self.inflight_lo) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

impl CongestionControl for Bbr2 {
    fn kind(&self) -> CcaKind {
        if self.plus.is_some() {
            CcaKind::Bbr2Plus
        } else {
            CcaKind::Bbr2
        }
    }

    fn on_ack(&mut self, ack: &AckSummary, rtt: &RttEstimator) {
        if ack.stale {
            return;
        }
        self.round = ack.round_count;
        if let Some(sample) = &ack.bw_sample {
            if eligible_for_max_filter(sample, self.btlbw()) {
                self.btlbw.update(sample.delivery_rate, self.cycle_count);
            }
            self.bw_latest = self.bw_latest.max(sample.delivery_rate);
            self.inflight_latest = self.inflight_latest.max(sample.delivered);
        }
        let expired = self.rtprop.update(ack.rtt_sample, ack.now);
        let state = self.state;
        if let Some(ps) = self.plus.as_mut() {
            ps.jitter.update(rtt.rttvar(), self.round);
            if let (Bbr2State::ProbeCruise, Some(r)) = (state, ack.rtt_sample) {
                ps.minrtt_curr_cruise = Some(ps.minrtt_curr_cruise.map_or(r, |m| m.min(r)));
            }
        }

        if let Some(round) = &ack.round_end {
            self.on_round_end(ack, round);
        }
        if ack.round_start {
            self.round_lost = 0;
        }
        self.round_lost += ack.lost_bytes;
        self.check_probe_loss(ack);
        self.check_transitions(ack, rtt);
        self.check_probe_rtt(ack, expired);
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
        let ps = self.plus.as_ref();
        CcTelemetry {
            state: self.state.name(),
            pacing_gain: self.pacing_gain,
            btlbw: self.btlbw(),
            rtprop: self.rtprop(),
            probe_bw_mode: ps.map(PlusState::mode),
            inflight_hi: self.inflight_hi,
            inflight_lo: self.inflight_lo,
            bw_lo: self.bw_lo,
            minrtt_curr_cruise: ps.and_then(|p| p.minrtt_curr_cruise),
            max4rtt_jitter: ps.and_then(PlusState::max4rtt_jitter),
            compensated_bdp: ps.and(self.bdp()).map(|b| b as u64),
            mode_switches: ps.map_or(0, |p| p.mode_switches),
            probe_try_aborts: ps.map_or(0, |p| p.aborted_cycles),
            aborted_cycle_max_gain: ps.and_then(|p| p.aborted_max_gain),
        }
    }
}
