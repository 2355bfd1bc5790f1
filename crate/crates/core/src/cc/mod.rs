//! Congestion controller contract and the controllers built on it.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use crate::rtt::RttEstimator;
use crate::time::{Rate, SimTime, MSS};
use crate::transport::{AckSummary, LossEvent, Packet, RoundSummary};

pub mod bbr1;
pub mod bbr2;
pub mod bbr2plus;
pub mod cubic;
pub mod model;

pub use bbr1::{Bbr1, Bbr1Params};
pub use bbr2::{Bbr2, Bbr2Params};
pub use bbr2plus::{Bbr2Plus, Bbr2PlusParams, ProbeBwMode};
pub use cubic::{Cubic, CubicParams};

/// Smallest congestion window any controller will report.
pub const MIN_CWND: u64 = 4 * MSS;
/// Window before any path estimate exists.
pub const INITIAL_CWND: u64 = 10 * MSS;
/// Pacing floor: one packet per 100ms.
pub const MIN_PACING_RATE: f64 = MSS as f64 / 0.1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CcError {
    #[error("unknown congestion control algorithm `{0}`")]
    UnknownCca(String),
    #[error("`{cca}` has no parameter `{param}`")]
    UnknownParam { cca: &'static str, param: String },
    #[error("invalid value {value} for parameter `{param}`: {reason}")]
    InvalidParam {
        param: String,
        value: f64,
        reason: &'static str,
    },
}

/// Snapshot of controller internals for telemetry.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CcTelemetry {
    pub state: &'static str,
    pub pacing_gain: f64,
    pub btlbw: Option<Rate>,
    pub rtprop: Option<Duration>,
    pub probe_bw_mode: Option<ProbeBwMode>,
    pub inflight_hi: Option<u64>,
    pub inflight_lo: Option<u64>,
    pub bw_lo: Option<Rate>,
    pub minrtt_curr_cruise: Option<Duration>,
    pub max4rtt_jitter: Option<Duration>,
    pub compensated_bdp: Option<u64>,
    pub mode_switches: u32,
    /// ProbeBW cycles whose ProbeTry aborted.
    pub probe_try_aborts: u64,
    pub aborted_cycle_max_gain: Option<f64>,
}

/// Callbacks the transport invokes and the two outputs it reads.
pub trait CongestionControl: fmt::Debug + Send {
    fn kind(&self) -> CcaKind;

    fn on_packet_sent(&mut self, _now: SimTime, _pkt: &Packet, _inflight: u64) {}

    fn on_loss_declared(&mut self, _loss: &LossEvent) {}

    /// Called before `on_ack` when the ACK closed a round.
    fn on_round_start(&mut self, _round: &RoundSummary, _rtt: &RttEstimator) {}

    fn on_ack(&mut self, ack: &AckSummary, rtt: &RttEstimator);

    fn on_rto(&mut self, _now: SimTime) {}

    /// Congestion window in bytes; always at least one MSS.
    fn cwnd(&self) -> u64;

    /// Pacing rate; always positive.
    fn pacing_rate(&self) -> Rate;

    fn telemetry(&self) -> CcTelemetry;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CcaKind {
    Cubic,
    Bbr,
    Bbr2,
    Bbr2Plus,
}

impl CcaKind {
    pub const ALL: [CcaKind; 4] = [CcaKind::Cubic, CcaKind::Bbr, CcaKind::Bbr2, CcaKind::Bbr2Plus];

    pub fn name(self) -> &'static str {
        match self {
            CcaKind::Cubic => "cubic",
            CcaKind::Bbr => "bbr",
            CcaKind::Bbr2 => "bbr2",
            CcaKind::Bbr2Plus => "bbr2plus",
        }
    }
}

impl fmt::Display for CcaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CcaKind {
    type Err = CcError;

    fn from_str(s: &str) -> Result<Self, CcError> {
        CcaKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| CcError::UnknownCca(s.to_string()))
    }
}

/// A controller choice plus its parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum CcaConfig {
    Cubic(CubicParams),
    Bbr(Bbr1Params),
    Bbr2(Bbr2Params),
    Bbr2Plus(Bbr2PlusParams),
}

impl CcaConfig {
    pub fn default_for(kind: CcaKind) -> Self {
        match kind {
            CcaKind::Cubic => CcaConfig::Cubic(CubicParams::default()),
            CcaKind::Bbr => CcaConfig::Bbr(Bbr1Params::default()),
            CcaKind::Bbr2 => CcaConfig::Bbr2(Bbr2Params::default()),
            CcaKind::Bbr2Plus => CcaConfig::Bbr2Plus(Bbr2PlusParams::default()),
        }
    }

    pub fn kind(&self) -> CcaKind {
        match self {
            CcaConfig::Cubic(_) => CcaKind::Cubic,
            CcaConfig::Bbr(_) => CcaKind::Bbr,
            CcaConfig::Bbr2(_) => CcaKind::Bbr2,
            CcaConfig::Bbr2Plus(_) => CcaKind::Bbr2Plus,
        }
    }

    /// Overrides one named parameter. Booleans are passed as 0/1.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<(), CcError> {
        match self {
            CcaConfig::Cubic(p) => p.set(name, value),
            CcaConfig::Bbr(p) => p.set(name, value),
            CcaConfig::Bbr2(p) => p.set(name, value),
            CcaConfig::Bbr2Plus(p) => p.set(name, value),
        }
    }

    pub fn validate(&self) -> Result<(), CcError> {
        match self {
            CcaConfig::Cubic(p) => p.validate(),
            CcaConfig::Bbr(_) => Ok(()),
            CcaConfig::Bbr2(p) => p.validate(),
            CcaConfig::Bbr2Plus(p) => p.validate(),
        }
    }

    /// Builds a controller; `seed` drives any randomized decisions.
    pub fn build(&self, seed: u64) -> Box<dyn CongestionControl> {
        match self {
            CcaConfig::Cubic(p) => Box::new(Cubic::new(p.clone())),
            CcaConfig::Bbr(p) => Box::new(Bbr1::new(p.clone(), seed)),
            CcaConfig::Bbr2(p) => Box::new(Bbr2::new(p.clone(), seed)),
            CcaConfig::Bbr2Plus(p) => Box::new(Bbr2Plus::new(p.clone(), seed)),
        }
    }
}

pub(crate) fn invalid(param: &str, value: f64, reason: &'static str) -> CcError {
    CcError::InvalidParam {
        param: param.to_string(),
        value,
        reason,
    }
}

pub(crate) fn unknown(cca: &'static str, param: &str) -> CcError {
    CcError::UnknownParam {
        cca,
        param: param.to_string(),
    }
}

/// `btlbw * rtprop` in bytes.
pub fn bdp_bytes(btlbw: Rate, rtprop: Duration) -> f64 {
    btlbw.bytes_in(rtprop)
}

/// A controller with a fixed window and pacing rate, for driving the
/// transport in tests.
#[derive(Clone, Debug)]
pub struct FixedWindow {
    pub cwnd: u64,
    pub rate: Rate,
}

impl FixedWindow {
    pub fn new(cwnd: u64, rate: Rate) -> Self {
        FixedWindow { cwnd, rate }
    }
}

impl CongestionControl for FixedWindow {
    fn kind(&self) -> CcaKind {
        CcaKind::Cubic
    }

    fn on_ack(&mut self, _ack: &AckSummary, _rtt: &RttEstimator) {}

    fn cwnd(&self) -> u64 {
        self.cwnd
    }

    fn pacing_rate(&self) -> Rate {
        self.rate
    }

    fn telemetry(&self) -> CcTelemetry {
        CcTelemetry {
            state: "fixed",
            pacing_gain: 1.0,
            ..Default::default()
        }
    }
}
