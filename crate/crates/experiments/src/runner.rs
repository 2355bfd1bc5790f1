//! Runs independent simulations, in parallel when the `parallel` feature is
//! enabled.

use std::path::Path;

use ccsim_netsim::SimResult;

use crate::metrics::jain_index_n;
use crate::output::{CellAxes, FlowRecord};
use crate::scenario::{Scenario, ScenarioError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Worker pool of the given size; zero picks one per core.
    Parallel { jobs: usize },
}

impl Execution {
    pub fn from_jobs(jobs: usize) -> Self {
        if jobs == 1 {
            Execution::Sequential
        } else {
            Execution::Parallel { jobs }
        }
    }
}

/// Maps `f` over `items`, preserving order. Without the `parallel`
/// feature every execution mode runs sequentially.
pub fn execute<T, R, F>(items: Vec<T>, exec: Execution, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    match exec {
        Execution::Sequential => items.into_iter().map(f).collect(),
        Execution::Parallel { jobs } => parallel_map(items, jobs, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, R, F>(items: Vec<T>, jobs: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("building worker pool");
    pool.install(|| items.into_par_iter().map(f).collect())
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, R, F>(items: Vec<T>, _jobs: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    items.into_iter().map(f).collect()
}

/// Runs a scenario once with the given seed.
pub fn run_scenario(scenario: &Scenario, seed: u64, base_dir: &Path) -> Result<SimResult, ScenarioError> {
    let cfg = scenario.to_sim_config(seed, base_dir)?;
    Ok(ccsim_netsim::run(&cfg)?)
}

/// Flattens one run into per-flow records.
pub fn flow_records(
    suite: &str,
    cell: &str,
    axes: &CellAxes,
    scenario: &Scenario,
    seed: u64,
    buffer_bytes: u64,
    result: &SimResult,
) -> Vec<FlowRecord> {
    let tputs: Vec<f64> = result.flows.iter().map(|f| f.mean_throughput_mbps).collect();
    let jain = (tputs.len() > 1).then(|| jain_index_n(&tputs)).flatten();
    let link_ok = result.link.conserved();
    result
        .flows
        .iter()
        .zip(&scenario.flows)
        .map(|(f, spec)| FlowRecord {
            suite: suite.to_string(),
            cell: cell.to_string(),
            seed,
            bandwidth_mbps: axes.bandwidth_mbps,
            rtt_ms: axes.rtt_ms,
            buffer_bdp: axes.buffer_bdp,
            loss_prob: axes.loss_prob,
            jitter_mean_ms: axes.jitter_mean_ms,
            schedule: axes.schedule.clone(),
            buffer_bytes,
            flow_id: f.flow_id,
            label: spec.display_label().to_string(),
            cca: f.cca.to_string(),
            base_rtt_ms: spec.base_rtt_ms,
            mean_throughput_mbps: f.mean_throughput_mbps,
            retransmission_rate: f.retransmission_rate,
            mean_queuing_delay_ms: f.mean_sojourn_ms,
            p95_queuing_delay_ms: f.p95_sojourn_ms,
            mean_rtt_ms: f.mean_rtt_ms,
            mean_inflight_bytes: f.mean_inflight_bytes,
            mode_switches: f.final_telemetry.mode_switches,
            jain_index: jain,
            conservation_ok: link_ok && f.conservation_error.is_none(),
        })
        .collect()
}
