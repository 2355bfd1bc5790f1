//! Scenario files, metrics, experiment suites and CSV output for the
//! congestion-control simulator.

pub mod metrics;
pub mod output;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod suites;

pub use runner::{execute, run_scenario, Execution};
pub use scenario::{Bottleneck, FlowSpec, Scenario, ScenarioError};
pub use suites::{run_suite, Cell, Suite, SuiteOptions};
