//! Deterministic discrete-event simulator of a single-bottleneck dumbbell.

pub mod event;
pub mod link;
pub mod sim;

pub use link::{
    DeliveryTrace, DroptailQueue, JitterConfig, LinkConfig, LinkStats, RateSource, StepSchedule,
};
pub use sim::{run, BacklogSample, FlowConfig, FlowSample, FlowSummary, SimConfig, SimResult};

use ccsim_core::cc::CcError;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("flow {flow}: {source}")]
    Cca {
        flow: usize,
        #[source]
        source: CcError,
    },
}
