//! Scenario files: a TOML description of one dumbbell experiment.
//!
//! ```toml
//! name = "bbr2-vs-cubic"
//! duration_s = 180
//! seed = 7                  # optional; the CLI seed wins when given
//! sample_interval_ms = 100  # optional
//!
//! [bottleneck]
//! rate_mbps = 40            # or: steps = [[0, 40], [20, 35]]  (seconds, Mbps)
//!                           # or: trace = "traces/lte.down"    (Mahimahi format)
//! buffer_bdp = 8            # or: buffer_bytes = 100000
//! bdp_rtt_ms = 40           # optional; defaults to the first flow's RTT
//! loss_prob = 0.0
//! jitter_mean_ms = 0
//! jitter_sd_ms = 5          # optional; defaults to a quarter of the mean
//!
//! [[flows]]
//! cca = "bbr2"              # cubic | bbr | bbr2 | bbr2plus
//! base_rtt_ms = 40
//! start_s = 0
//! label = "bbr2(a=0.2)"     # optional
//! params = { alpha = 0.2, beta = 0.3 }
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use ccsim_core::cc::{CcError, CcaConfig, CcaKind};
use ccsim_core::{Rate, SimTime, MSS};
use ccsim_netsim::{
    DeliveryTrace, FlowConfig, JitterConfig, LinkConfig, RateSource, SimConfig, SimError,
    StepSchedule,
};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("parsing scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("flow {flow}: {source}")]
    Cca { flow: usize, source: CcError },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// A parameter override; booleans become 0/1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Number(f64),
}

impl ParamValue {
    pub fn as_f64(self) -> f64 {
        match self {
            ParamValue::Bool(b) => b as u8 as f64,
            ParamValue::Number(v) => v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub cca: String,
    pub base_rtt_ms: f64,
    #[serde(default)]
    pub start_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, ParamValue>,
}

impl FlowSpec {
    pub fn new(cca: CcaKind, base_rtt_ms: f64) -> Self {
        FlowSpec {
            cca: cca.name().to_string(),
            base_rtt_ms,
            start_s: 0.0,
            label: None,
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), ParamValue::Number(value));
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// The label, or the CCA name.
    pub fn display_label(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.cca)
    }

    pub fn cca_config(&self) -> Result<CcaConfig, CcError> {
        let kind: CcaKind = self.cca.parse()?;
        let mut cfg = CcaConfig::default_for(kind);
        for (name, value) in &self.params {
            cfg.set_param(name, value.as_f64())?;
        }
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bottleneck {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_mbps: Option<f64>,
    /// `(seconds, Mbps)` pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<(f64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffer_bytes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffer_bdp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bdp_rtt_ms: Option<f64>,
    #[serde(default)]
    pub loss_prob: f64,
    #[serde(default)]
    pub jitter_mean_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter_sd_ms: Option<f64>,
}

impl Bottleneck {
    pub fn constant(rate_mbps: f64) -> Self {
        Bottleneck {
            rate_mbps: Some(rate_mbps),
            steps: None,
            trace: None,
            buffer_bytes: None,
            buffer_bdp: None,
            bdp_rtt_ms: None,
            loss_prob: 0.0,
            jitter_mean_ms: 0.0,
            jitter_sd_ms: None,
        }
    }

    pub fn with_steps(steps: Vec<(f64, f64)>) -> Self {
        Bottleneck {
            rate_mbps: None,
            steps: Some(steps),
            ..Self::constant(0.0)
        }
    }

    pub fn buffer_bdp(mut self, multiple: f64) -> Self {
        self.buffer_bdp = Some(multiple);
        self.buffer_bytes = None;
        self
    }

    pub fn buffer_bytes(mut self, bytes: u64) -> Self {
        self.buffer_bytes = Some(bytes);
        self.buffer_bdp = None;
        self
    }

    fn rate_source(&self, base_dir: &Path) -> Result<RateSource, ScenarioError> {
        match (self.rate_mbps, &self.steps, &self.trace) {
            (Some(r), None, None) => {
                if !(r > 0.0 && r.is_finite()) {
                    return Err(ScenarioError::Invalid(format!("rate_mbps {r} must be positive")));
                }
                Ok(RateSource::Constant(Rate::from_mbps(r)))
            }
            (None, Some(steps), None) => Ok(RateSource::Steps(StepSchedule::from_secs_mbps(steps)?)),
            (None, None, Some(path)) => {
                let path = if path.is_absolute() {
                    path.clone()
                } else {
                    base_dir.join(path)
                };
                Ok(RateSource::Trace(DeliveryTrace::load(&path)?))
            }
            _ => Err(ScenarioError::Invalid(
                "bottleneck needs exactly one of rate_mbps, steps, trace".into(),
            )),
        }
    }
}

fn default_sample_interval() -> u64 {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_sample_interval")]
    pub sample_interval_ms: u64,
    pub bottleneck: Bottleneck,
    pub flows: Vec<FlowSpec>,
}

impl Scenario {
    pub fn new(name: impl Into<String>, duration_s: f64, bottleneck: Bottleneck, flows: Vec<FlowSpec>) -> Self {
        Scenario {
            name: name.into(),
            duration_s,
            seed: None,
            sample_interval_ms: default_sample_interval(),
            bottleneck,
            flows,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Checks everything that does not need the filesystem.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(ScenarioError::Invalid(format!(
                "duration_s {} must be positive",
                self.duration_s
            )));
        }
        if self.flows.is_empty() {
            return Err(ScenarioError::Invalid("no flows".into()));
        }
        if self.sample_interval_ms == 0 {
            return Err(ScenarioError::Invalid("sample_interval_ms must be positive".into()));
        }
        for (i, f) in self.flows.iter().enumerate() {
            f.cca_config()
                .and_then(|c| c.validate())
                .map_err(|source| ScenarioError::Cca { flow: i, source })?;
            if !(f.base_rtt_ms > 0.0) || !(f.start_s >= 0.0) {
                return Err(ScenarioError::Invalid(format!(
                    "flow {i}: base_rtt_ms must be positive and start_s non-negative"
                )));
            }
        }
        let b = &self.bottleneck;
        match (b.buffer_bytes, b.buffer_bdp) {
            (Some(0), None) => return Err(ScenarioError::Invalid("buffer must be positive".into())),
            (Some(_), None) => {}
            (None, Some(m)) if m > 0.0 && m.is_finite() => {}
            (None, Some(m)) => {
                return Err(ScenarioError::Invalid(format!("buffer_bdp {m} must be positive")))
            }
            _ => {
                return Err(ScenarioError::Invalid(
                    "bottleneck needs exactly one of buffer_bytes, buffer_bdp".into(),
                ))
            }
        }
        if !(0.0..=1.0).contains(&b.loss_prob) {
            return Err(ScenarioError::Invalid(format!("loss_prob {} outside [0, 1]", b.loss_prob)));
        }
        if !(b.jitter_mean_ms >= 0.0) || b.jitter_sd_ms.is_some_and(|sd| !(sd >= 0.0)) {
            return Err(ScenarioError::Invalid("jitter must be non-negative".into()));
        }
        Ok(())
    }

    /// Buffer in bytes, resolving BDP multiples against the nominal rate at
    /// time zero and the chosen RTT.
    pub fn buffer_bytes(&self, rate: &RateSource) -> u64 {
        let b = &self.bottleneck;
        match (b.buffer_bytes, b.buffer_bdp) {
            (Some(bytes), _) => bytes,
            (None, Some(m)) => {
                let rtt_ms = b.bdp_rtt_ms.unwrap_or(self.flows[0].base_rtt_ms);
                let bdp = rate
                    .rate_at(SimTime::ZERO)
                    .bytes_in(Duration::from_secs_f64(rtt_ms / 1e3));
                ((m * bdp).round() as u64).max(MSS)
            }
            (None, None) => unreachable!("validated"),
        }
    }

    /// Resolves to a simulator config. Trace paths are relative to
    /// `base_dir`.
    pub fn to_sim_config(&self, seed: u64, base_dir: &Path) -> Result<SimConfig, ScenarioError> {
        self.validate()?;
        let rate = self.bottleneck.rate_source(base_dir)?;
        let buffer_bytes = self.buffer_bytes(&rate);
        let b = &self.bottleneck;
        let jitter = (b.jitter_mean_ms > 0.0 || b.jitter_sd_ms.is_some_and(|sd| sd > 0.0)).then(|| {
            let mean = Duration::from_secs_f64(b.jitter_mean_ms / 1e3);
            match b.jitter_sd_ms {
                Some(sd) => JitterConfig {
                    mean,
                    sd: Duration::from_secs_f64(sd / 1e3),
                },
                None => JitterConfig::with_mean(mean),
            }
        });
        let flows = self
            .flows
            .iter()
            .enumerate()
            .map(|(i, f)| {
                Ok(FlowConfig {
                    cca: f.cca_config().map_err(|source| ScenarioError::Cca { flow: i, source })?,
                    start: Duration::from_secs_f64(f.start_s),
                    base_rtt: Duration::from_secs_f64(f.base_rtt_ms / 1e3),
                    app_limit_bytes: None,
                    app_rate: None,
                })
            })
            .collect::<Result<Vec<_>, ScenarioError>>()?;
        let cfg = SimConfig {
            duration: Duration::from_secs_f64(self.duration_s),
            seed,
            sample_interval: Duration::from_millis(self.sample_interval_ms),
            link: LinkConfig {
                rate,
                buffer_bytes,
                loss_prob: b.loss_prob,
                jitter,
            },
            flows,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
