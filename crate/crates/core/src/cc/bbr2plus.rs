//! BBRv2+: delay-guided probing on top of the BBRv2 engine.
//!
//! * ProbeTry: two rounds at gains 1.1 then 1.0; ProbeUp only follows if
//!   the round-minimum RTT did not grow by more than `gamma`.
//! * Continuous probing: ProbeUp repeats while the round-minimum RTT stays
//!   within `gamma` of its value before probing.
//! * Filter advancement: in ProbeCruise or ProbeDown, at most once per
//!   round, the oldest bandwidth-filter entry is expired when the round's
//!   minimum RTT exceeds `theta * rtprop`.
//! * Dual mode: cruises that keep seeing a standing queue switch ProbeBW to
//!   the plain BBRv2 cycle (restarting from Startup); empty-queue cruises
//!   switch back.
//! * Jitter compensation: the BDP adds the recent maximum RTT variation
//!   when it exceeds `mu * rtprop`.

use std::fmt;
use std::time::Duration;

use super::bbr2::Bbr2;
use super::{invalid, unknown, CcError, CcTelemetry, CcaKind, CongestionControl};
use crate::filter::WindowedFilter;
use crate::rtt::RttEstimator;
use crate::time::{Rate, SimTime};
use crate::transport::{AckSummary, LossEvent, Packet, RoundSummary};

#[derive(Clone, Debug, PartialEq)]
pub struct Bbr2PlusParams {
    pub gamma: f64,
    pub theta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub eta1: u32,
    pub eta2: u32,
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub cruise_rounds: u32,
    pub try_gain: f64,
    pub try_drain_gain: f64,
    pub dual_mode: bool,
}

impl Default for Bbr2PlusParams {
    fn default() -> Self {
        Bbr2PlusParams {
            gamma: 1.02,
            theta: 1.1,
            lambda1: 1.1,
            lambda2: 1.05,
            eta1: 2,
            eta2: 4,
            mu: 0.5,
            alpha: 0.20,
            beta: 0.3,
            cruise_rounds: 6,
            try_gain: 1.1,
            try_drain_gain: 0.9,
            dual_mode: true,
        }
    }
}

impl Bbr2PlusParams {
    pub(crate) fn set(&mut self, name: &str, value: f64) -> Result<(), CcError> {
        match name {
            "gamma" => self.gamma = value,
            "theta" => self.theta = value,
            "lambda1" => self.lambda1 = value,
            "lambda2" => self.lambda2 = value,
            "eta1" => self.eta1 = as_count(name, value)?,
            "eta2" => self.eta2 = as_count(name, value)?,
            "mu" => self.mu = value,
            "alpha" => self.alpha = value,
            "beta" => self.beta = value,
            "cruise_rounds" => self.cruise_rounds = as_count(name, value)?,
            "try_gain" => self.try_gain = value,
            "try_drain_gain" => self.try_drain_gain = value,
            "dual_mode" => self.dual_mode = value != 0.0,
            _ => return Err(unknown("bbr2plus", name)),
        }
        self.validate()
    }

    pub(crate) fn validate(&self) -> Result<(), CcError> {
        if !(self.gamma > 1.0) {
            return Err(invalid("gamma", self.gamma, "must exceed 1"));
        }
        if !(self.theta > 1.0) {
            return Err(invalid("theta", self.theta, "must exceed 1"));
        }
        if !(self.lambda2 > 1.0) {
            return Err(invalid("lambda2", self.lambda2, "must exceed 1"));
        }
        if !(self.lambda1 > self.lambda2) {
            return Err(invalid("lambda1", self.lambda1, "must exceed lambda2"));
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(invalid("mu", self.mu, "must be in (0, 1)"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(invalid("alpha", self.alpha, "must be in (0, 1]"));
        }
        if !(self.beta >= 0.0 && self.beta < 1.0) {
            return Err(invalid("beta", self.beta, "must be in [0, 1)"));
        }
        if !(self.try_gain > 1.0) {
            return Err(invalid("try_gain", self.try_gain, "must exceed 1"));
        }
        if !(self.try_drain_gain > 0.0 && self.try_drain_gain < 1.0) {
            return Err(invalid("try_drain_gain", self.try_drain_gain, "must be in (0, 1)"));
        }
        Ok(())
    }
}

fn as_count(name: &str, value: f64) -> Result<u32, CcError> {
    if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
        Ok(value as u32)
    } else {
        Err(invalid(name, value, "must be a positive integer"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProbeBwMode {
    /// Delay-guided probing.
    Plus,
    /// The original BBRv2 ProbeBW cycle.
    V2,
}

impl ProbeBwMode {
    pub fn name(self) -> &'static str {
        match self {
            ProbeBwMode::Plus => "BBRv2+",
            ProbeBwMode::V2 => "BBRv2",
        }
    }
}

impl fmt::Display for ProbeBwMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn scaled(d: Duration, factor: f64) -> f64 {
    d.as_secs_f64() * factor
}

/// End of ProbeTry: true means the round-minimum RTT grew past
/// `gamma * prev` and probing is abandoned for this cycle.
pub fn probe_try_aborts(minrtt_curr: Duration, minrtt_prev: Duration, gamma: f64) -> bool {
    minrtt_curr.as_secs_f64() > scaled(minrtt_prev, gamma)
}

/// End of a ProbeUp episode: true means probe again.
pub fn continue_probing(minrtt_curr: Duration, minrtt_before_probe: Duration, gamma: f64) -> bool {
    minrtt_curr.as_secs_f64() <= scaled(minrtt_before_probe, gamma)
}

/// Whether the round's minimum RTT shows a standing queue large enough to
/// expire the oldest bandwidth-filter entry.
pub fn should_advance_filter(minrtt_curr: Duration, rtprop: Duration, theta: f64) -> bool {
    minrtt_curr.as_secs_f64() > scaled(rtprop, theta)
}

/// BDP in bytes, widened by the recent jitter when it is large relative to
/// rtprop.
pub fn compensated_bdp(btlbw: Rate, rtprop: Duration, jitter: Duration, mu: f64) -> f64 {
    if jitter.as_secs_f64() > scaled(rtprop, mu) {
        btlbw.bytes_in(rtprop + jitter)
    } else {
        btlbw.bytes_in(rtprop)
    }
}

/// Hysteresis counters deciding the ProbeBW mode.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DualMode {
    pub mode: ProbeBwMode,
    pub buffer_filling: u32,
    pub buffer_empty: u32,
}

impl Default for DualMode {
    fn default() -> Self {
        DualMode {
            mode: ProbeBwMode::Plus,
            buffer_filling: 0,
            buffer_empty: 0,
        }
    }
}

impl DualMode {
    /// Evaluates one finished cruise. Returns the new mode when it changes.
    pub fn on_cruise_end(
        &mut self,
        minrtt_cruise: Duration,
        rtprop: Duration,
        p: &Bbr2PlusParams,
    ) -> Option<ProbeBwMode> {
        let m = minrtt_cruise.as_secs_f64();
        match self.mode {
            ProbeBwMode::Plus => {
                if m > scaled(rtprop, p.lambda1) {
                    self.buffer_filling += 1;
                } else {
                    self.buffer_filling = 0;
                }
                if self.buffer_filling >= p.eta1 {
                    self.buffer_filling = 0;
                    self.buffer_empty = 0;
                    self.mode = ProbeBwMode::V2;
                    return Some(ProbeBwMode::V2);
                }
            }
            ProbeBwMode::V2 => {
                if m <= scaled(rtprop, p.lambda2) {
                    self.buffer_empty += 1;
                } else {
                    self.buffer_empty = 0;
                }
                if self.buffer_empty >= p.eta2 {
                    self.buffer_filling = 0;
                    self.buffer_empty = 0;
                    self.mode = ProbeBwMode::Plus;
                    return Some(ProbeBwMode::Plus);
                }
            }
        }
        None
    }
}

/// Summary of one ProbeBW cycle (cruise entry to the next cruise entry).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleRecord {
    pub try_aborted: bool,
    pub max_pacing_gain: f64,
}

const CYCLE_LOG_LEN: usize = 64;

/// Extra state BBRv2+ keeps beside the BBRv2 engine.
#[derive(Clone, Debug)]
pub(crate) struct PlusState {
    pub p: Bbr2PlusParams,
    pub dual: DualMode,
    pub minrtt_before_probe: Option<Duration>,
    pub minrtt_curr_cruise: Option<Duration>,
    pub jitter: WindowedFilter<Duration>,
    pub cruise_rounds_done: u32,
    pub try_round: u8,
    pub try_aborted: bool,
    pub filter_expiries: u64,
    pub last_expiry_round: Option<u64>,
    pub mode_switches: u32,
    pub cycle_max_gain: f64,
    pub cycles: Vec<CycleRecord>,
    pub aborted_cycles: u64,
    /// Highest pacing gain seen in any cycle whose ProbeTry aborted.
    pub aborted_max_gain: Option<f64>,
}

impl PlusState {
    pub fn new(p: Bbr2PlusParams) -> Self {
        PlusState {
            p,
            dual: DualMode::default(),
            minrtt_before_probe: None,
            minrtt_curr_cruise: None,
            jitter: WindowedFilter::max(4),
            cruise_rounds_done: 0,
            try_round: 0,
            try_aborted: false,
            filter_expiries: 0,
            last_expiry_round: None,
            mode_switches: 0,
            cycle_max_gain: 0.0,
            cycles: Vec::new(),
            aborted_cycles: 0,
            aborted_max_gain: None,
        }
    }

    pub fn mode(&self) -> ProbeBwMode {
        self.dual.mode
    }

    pub fn max4rtt_jitter(&self) -> Option<Duration> {
        self.jitter.current()
    }

    pub fn close_cycle(&mut self) {
        if self.cycle_max_gain > 0.0 {
            if self.try_aborted {
                self.aborted_cycles += 1;
                let g = self.aborted_max_gain.map_or(self.cycle_max_gain, |g| g.max(self.cycle_max_gain));
                self.aborted_max_gain = Some(g);
            }
            if self.cycles.len() == CYCLE_LOG_LEN {
                self.cycles.remove(0);
            }
            self.cycles.push(CycleRecord {
                try_aborted: self.try_aborted,
                max_pacing_gain: self.cycle_max_gain,
            });
        }
        self.cycle_max_gain = 0.0;
        self.try_aborted = false;
    }
}

/// BBRv2+ controller.
#[derive(Debug)]
pub struct Bbr2Plus {
    inner: Bbr2,
}

impl Bbr2Plus {
    pub fn new(params: Bbr2PlusParams, seed: u64) -> Self {
        Bbr2Plus {
            inner: Bbr2::new_plus(params, seed),
        }
    }

    pub fn engine(&self) -> &Bbr2 {
        &self.inner
    }

    pub fn mode(&self) -> ProbeBwMode {
        self.inner.plus_mode().unwrap_or(ProbeBwMode::Plus)
    }

    pub fn mode_switches(&self) -> u32 {
        self.inner.plus().map_or(0, |p| p.mode_switches)
    }

    pub fn filter_expiries(&self) -> u64 {
        self.inner.plus().map_or(0, |p| p.filter_expiries)
    }

    /// Recent completed ProbeBW cycles, oldest first.
    pub fn cycle_log(&self) -> &[CycleRecord] {
        self.inner.plus().map_or(&[], |p| &p.cycles)
    }
}

impl CongestionControl for Bbr2Plus {
    fn kind(&self) -> CcaKind {
        CcaKind::Bbr2Plus
    }

    fn on_packet_sent(&mut self, now: SimTime, pkt: &Packet, inflight: u64) {
        self.inner.on_packet_sent(now, pkt, inflight)
    }

    fn on_loss_declared(&mut self, loss: &LossEvent) {
        self.inner.on_loss_declared(loss)
    }

    fn on_round_start(&mut self, round: &RoundSummary, rtt: &RttEstimator) {
        self.inner.on_round_start(round, rtt)
    }

    fn on_ack(&mut self, ack: &AckSummary, rtt: &RttEstimator) {
        self.inner.on_ack(ack, rtt)
    }

    fn on_rto(&mut self, now: SimTime) {
        self.inner.on_rto(now)
    }

    fn cwnd(&self) -> u64 {
        self.inner.cwnd()
    }

    fn pacing_rate(&self) -> Rate {
        self.inner.pacing_rate()
    }

    fn telemetry(&self) -> CcTelemetry {
        self.inner.telemetry()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(v: f64) -> Duration {
        Duration::from_secs_f64(v / 1000.0)
    }

    #[test]
    fn probe_try_threshold() {
        assert!(probe_try_aborts(ms(41.0), ms(40.0), 1.02));
        assert!(!probe_try_aborts(ms(40.5), ms(40.0), 1.02));
        assert!(!probe_try_aborts(ms(40.0), ms(40.0), 1.02));
    }

    #[test]
    fn continuous_probe_threshold() {
        assert!(continue_probing(ms(40.0), ms(40.0), 1.02));
        assert!(!continue_probing(ms(41.0), ms(40.0), 1.02));
    }

    #[test]
    fn filter_advance_threshold() {
        assert!(should_advance_filter(ms(50.0), ms(40.0), 1.1));
        assert!(!should_advance_filter(ms(40.0), ms(40.0), 1.1));
    }

    #[test]
    fn compensation_examples() {
        let bw = Rate::from_bytes_per_sec(5e6);
        let bdp = |j| compensated_bdp(bw, ms(40.0), ms(j), 0.5);
        assert!((bdp(10.0) - 200_000.0).abs() < 1e-6);
        assert!((bdp(30.0) - 350_000.0).abs() < 1e-6);
        assert!((bdp(0.0) - 200_000.0).abs() < 1e-6);
    }

    fn run_cruises(d: &mut DualMode, minima: &[f64]) -> Vec<Option<ProbeBwMode>> {
        let p = Bbr2PlusParams::default();
        minima
            .iter()
            .map(|&m| d.on_cruise_end(ms(m), ms(40.0), &p))
            .collect()
    }

    #[test]
    fn dual_mode_switches_after_two_filling_cruises() {
        let mut d = DualMode::default();
        let out = run_cruises(&mut d, &[46.0, 45.0]);
        assert_eq!(out, vec![None, Some(ProbeBwMode::V2)]);
    }

    #[test]
    fn dual_mode_counter_resets() {
        let mut d = DualMode::default();
        let out = run_cruises(&mut d, &[46.0, 41.0, 46.0]);
        assert!(out.iter().all(Option::is_none));
        assert_eq!(d.mode, ProbeBwMode::Plus);
    }

    #[test]
    fn dual_mode_returns_after_four_empty_cruises() {
        let mut d = DualMode {
            mode: ProbeBwMode::V2,
            ..Default::default()
        };
        let out = run_cruises(&mut d, &[42.0, 41.0, 40.0, 42.0]);
        assert_eq!(out[3], Some(ProbeBwMode::Plus));
        assert!(out[..3].iter().all(Option::is_none));
    }

    #[test]
    fn params_reject_bad_lambdas() {
        let mut p = Bbr2PlusParams::default();
        assert!(p.set("lambda1", 1.01).is_err());
        let mut p = Bbr2PlusParams::default();
        assert!(p.set("eta1", 1.5).is_err());
        let mut p = Bbr2PlusParams::default();
        p.set("dual_mode", 0.0).unwrap();
        assert!(!p.dual_mode);
    }
}
