//! Simulation primitives, the reliable transport and the congestion
//! controllers it hosts.

pub mod cc;
pub mod filter;
pub mod rtt;
pub mod sampler;
pub mod time;
pub mod transport;

pub use cc::{CcTelemetry, CcaConfig, CcaKind, CongestionControl};
pub use time::{Rate, SimTime, MSS};
