//! Named experiment grids and the suite runner.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ccsim_core::cc::CcaKind;
use ccsim_netsim::sim::derive_seed;

use crate::output::{self, CellAxes, FlowRecord, SummaryRecord};
use crate::runner::{execute, flow_records, Execution};
use crate::scenario::{Bottleneck, FlowSpec, Scenario, ScenarioError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Suite {
    InterFairness,
    RttFairness,
    RetxHeatmap,
    LossResilience,
    Responsiveness,
    Jitter,
    StepTraces,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::InterFairness,
        Suite::RttFairness,
        Suite::RetxHeatmap,
        Suite::LossResilience,
        Suite::Responsiveness,
        Suite::Jitter,
        Suite::StepTraces,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::InterFairness => "inter_fairness",
            Suite::RttFairness => "rtt_fairness",
            Suite::RetxHeatmap => "retx_heatmap",
            Suite::LossResilience => "loss_resilience",
            Suite::Responsiveness => "responsiveness",
            Suite::Jitter => "jitter",
            Suite::StepTraces => "step_traces",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown suite `{0}`; expected one of inter_fairness, rtt_fairness, retx_heatmap, loss_resilience, responsiveness, jitter, step_traces")]
pub struct UnknownSuite(pub String);

impl FromStr for Suite {
    type Err = UnknownSuite;

    fn from_str(s: &str) -> Result<Self, UnknownSuite> {
        Suite::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownSuite(s.to_string()))
    }
}

/// One grid point: a scenario plus its coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub id: String,
    pub axes: CellAxes,
    pub scenario: Scenario,
}

pub const BUFFER_BDP_SWEEP: [f64; 9] = [0.2, 0.5, 1.0, 1.5, 2.0, 4.0, 8.0, 16.0, 32.0];
pub const FAIRNESS_SECS: f64 = 180.0;
pub const HEATMAP_SECS: f64 = 30.0;
pub const HEATMAP_BUFFER_BYTES: u64 = 100_000;
pub const HEATMAP_RTTS_MS: [f64; 8] = [5.0, 10.0, 20.0, 40.0, 50.0, 80.0, 100.0, 150.0];
pub const HEATMAP_BANDWIDTHS_MBPS: [f64; 6] = [10.0, 20.0, 50.0, 100.0, 150.0, 200.0];
pub const HEATMAP_EXTRA_BANDWIDTHS_MBPS: [f64; 3] = [300.0, 500.0, 750.0];
pub const LOSS_SWEEP: [f64; 9] = [0.0, 0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3];
pub const JITTER_SWEEP_MS: [f64; 7] = [0.0, 20.0, 40.0, 60.0, 80.0, 100.0, 120.0];

/// BBRv2 with the given loss threshold and lower-bound backoff.
pub fn bbr2_variant(alpha: f64, beta: f64) -> FlowSpec {
    FlowSpec::new(CcaKind::Bbr2, 40.0)
        .with_param("alpha", alpha)
        .with_param("beta", beta)
        .with_label(format!("bbr2({}%,{})", alpha * 100.0, beta))
}

pub fn bbr2plus_single_mode() -> FlowSpec {
    FlowSpec::new(CcaKind::Bbr2Plus, 40.0)
        .with_param("dual_mode", 0.0)
        .with_label("bbr2plus(no-dual)")
}

/// Controllers competing against Cubic in the fairness suites.
pub fn fairness_contenders() -> Vec<FlowSpec> {
    vec![
        FlowSpec::new(CcaKind::Bbr, 40.0),
        FlowSpec::new(CcaKind::Bbr2, 40.0),
        bbr2_variant(0.2, 0.3),
        FlowSpec::new(CcaKind::Bbr2Plus, 40.0),
        bbr2plus_single_mode(),
    ]
}

pub fn loss_contenders() -> Vec<FlowSpec> {
    vec![
        FlowSpec::new(CcaKind::Cubic, 40.0),
        FlowSpec::new(CcaKind::Bbr, 40.0),
        bbr2_variant(0.02, 0.3),
        bbr2_variant(0.2, 0.3),
        bbr2_variant(0.2, 0.0),
        FlowSpec::new(CcaKind::Bbr2Plus, 40.0),
    ]
}

fn fmt_num(x: f64) -> String {
    format!("{x}").replace('.', "p")
}

fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect::<String>()
        .trim_matches('-')
        .to_string()
}

/// Shallow-versus-deep buffer competition against Cubic at 40Mbps/40ms.
pub fn inter_fairness_cell(contender: &FlowSpec, buffer_bdp: f64, secs: f64) -> Cell {
    let id = format!("{}-vs-cubic_buf{}bdp", slug(contender.display_label()), fmt_num(buffer_bdp));
    Cell {
        axes: CellAxes {
            bandwidth_mbps: Some(40.0),
            rtt_ms: Some(40.0),
            buffer_bdp: Some(buffer_bdp),
            ..Default::default()
        },
        scenario: Scenario::new(
            id.clone(),
            secs,
            Bottleneck::constant(40.0).buffer_bdp(buffer_bdp),
            vec![contender.clone(), FlowSpec::new(CcaKind::Cubic, 40.0)],
        ),
        id,
    }
}

pub fn rtt_fairness_cell(kind: CcaKind, buffer_bdp: f64, secs: f64) -> Cell {
    let id = format!("{}_40ms-vs-150ms_buf{}bdp", kind, fmt_num(buffer_bdp));
    let mut bottleneck = Bottleneck::constant(40.0).buffer_bdp(buffer_bdp);
    bottleneck.bdp_rtt_ms = Some(150.0);
    Cell {
        axes: CellAxes {
            bandwidth_mbps: Some(40.0),
            buffer_bdp: Some(buffer_bdp),
            ..Default::default()
        },
        scenario: Scenario::new(
            id.clone(),
            secs,
            bottleneck,
            vec![FlowSpec::new(kind, 40.0), FlowSpec::new(kind, 150.0)],
        ),
        id,
    }
}

/// Single flow over a 100KB buffer.
pub fn heatmap_cell(kind: CcaKind, bandwidth_mbps: f64, rtt_ms: f64, secs: f64) -> Cell {
    let id = format!("{}_{}mbps_{}ms", kind, fmt_num(bandwidth_mbps), fmt_num(rtt_ms));
    Cell {
        axes: CellAxes {
            bandwidth_mbps: Some(bandwidth_mbps),
            rtt_ms: Some(rtt_ms),
            ..Default::default()
        },
        scenario: Scenario::new(
            id.clone(),
            secs,
            Bottleneck::constant(bandwidth_mbps).buffer_bytes(HEATMAP_BUFFER_BYTES),
            vec![FlowSpec::new(kind, rtt_ms)],
        ),
        id,
    }
}

/// Single flow at 40Mbps/40ms with a 32·BDP buffer and random loss.
pub fn loss_cell(contender: &FlowSpec, loss_prob: f64, secs: f64) -> Cell {
    let id = format!("{}_loss{}", slug(contender.display_label()), fmt_num(loss_prob * 100.0));
    let mut bottleneck = Bottleneck::constant(40.0).buffer_bdp(32.0);
    bottleneck.loss_prob = loss_prob;
    Cell {
        axes: CellAxes {
            bandwidth_mbps: Some(40.0),
            rtt_ms: Some(40.0),
            buffer_bdp: Some(32.0),
            loss_prob: Some(loss_prob),
            ..Default::default()
        },
        scenario: Scenario::new(id.clone(), secs, bottleneck, vec![contender.clone()]),
        id,
    }
}

/// Single flow at 40Mbps/40ms with a 32·BDP buffer and Gaussian jitter.
pub fn jitter_cell(kind: CcaKind, jitter_mean_ms: f64, secs: f64) -> Cell {
    let id = format!("{}_jitter{}ms", kind, fmt_num(jitter_mean_ms));
    let mut bottleneck = Bottleneck::constant(40.0).buffer_bdp(32.0);
    bottleneck.jitter_mean_ms = jitter_mean_ms;
    Cell {
        axes: CellAxes {
            bandwidth_mbps: Some(40.0),
            rtt_ms: Some(40.0),
            buffer_bdp: Some(32.0),
            jitter_mean_ms: Some(jitter_mean_ms),
            ..Default::default()
        },
        scenario: Scenario::new(id.clone(), secs, bottleneck, vec![FlowSpec::new(kind, 40.0)]),
        id,
    }
}

pub const STEP_MBPS: f64 = 5.0;
pub const STEP_INTERVAL_S: f64 = 2.0;
/// When the responsiveness schedules start stepping.
pub const RESPONSIVENESS_WARMUP_S: f64 = 10.0;

/// Steps of `delta` Mbps every two seconds from `from` to `to`, starting at
/// `start_s`.
pub fn staircase(start_s: f64, from: f64, to: f64) -> Vec<(f64, f64)> {
    let mut steps = vec![(0.0, from)];
    let n = ((to - from).abs() / STEP_MBPS).round() as usize;
    let dir = (to - from).signum();
    for k in 1..=n {
        steps.push((start_s + (k - 1) as f64 * STEP_INTERVAL_S, from + dir * STEP_MBPS * k as f64));
    }
    steps
}

/// Single flow on a staircase schedule, 40ms, 32·BDP of the initial rate.
pub fn responsiveness_cell(kind: CcaKind, schedule: &str, steps: Vec<(f64, f64)>, secs: f64) -> Cell {
    let id = format!("{kind}_{schedule}");
    let bottleneck = Bottleneck::with_steps(steps).buffer_bdp(32.0);
    Cell {
        axes: CellAxes {
            rtt_ms: Some(40.0),
            buffer_bdp: Some(32.0),
            schedule: Some(schedule.to_string()),
            ..Default::default()
        },
        scenario: Scenario::new(id.clone(), secs, bottleneck, vec![FlowSpec::new(kind, 40.0)]),
        id,
    }
}

pub const STEP_TRACE_SECS: f64 = 40.0;
pub const STEP_TRACE_BUFFER_BYTES: u64 = 1_500_000;

/// Five synthetic schedules moving 5Mbps every two seconds within
/// [10, 50] Mbps.
pub fn step_trace_schedules() -> Vec<(&'static str, Vec<(f64, f64)>)> {
    let levels = |f: &dyn Fn(usize) -> f64| -> Vec<(f64, f64)> {
        (0..(STEP_TRACE_SECS / STEP_INTERVAL_S) as usize)
            .map(|k| (k as f64 * STEP_INTERVAL_S, f(k)))
            .collect()
    };
    let tri = |k: usize| {
        let p = k % 16;
        10.0 + STEP_MBPS * (if p <= 8 { p } else { 16 - p }) as f64
    };
    let mut walk = vec![30.0];
    for k in 1..(STEP_TRACE_SECS / STEP_INTERVAL_S) as usize {
        let prev: f64 = walk[k - 1];
        let up = derive_seed(0x57e9, k as u64) & 1 == 1;
        let next = if (up && prev < 50.0) || prev <= 10.0 { prev + STEP_MBPS } else { prev - STEP_MBPS };
        walk.push(next);
    }
    vec![
        ("staircase_up", levels(&|k| 10.0 + STEP_MBPS * k.min(8) as f64)),
        ("staircase_down", levels(&|k| 50.0 - STEP_MBPS * k.min(8) as f64)),
        ("triangle", levels(&tri)),
        ("inverted_triangle", levels(&|k| 60.0 - tri(k))),
        ("random_walk", levels(&|k| walk[k])),
    ]
}

pub fn step_trace_cell(kind: CcaKind, schedule: &str, steps: Vec<(f64, f64)>, secs: f64) -> Cell {
    let id = format!("{kind}_{schedule}");
    let bottleneck = Bottleneck::with_steps(steps).buffer_bytes(STEP_TRACE_BUFFER_BYTES);
    Cell {
        axes: CellAxes {
            rtt_ms: Some(40.0),
            schedule: Some(schedule.to_string()),
            ..Default::default()
        },
        scenario: Scenario::new(id.clone(), secs, bottleneck, vec![FlowSpec::new(kind, 40.0)]),
        id,
    }
}

/// Materializes a suite's grid.
pub fn cells(suite: Suite, full_grid: bool) -> Vec<Cell> {
    match suite {
        Suite::InterFairness => fairness_contenders()
            .iter()
            .flat_map(|c| BUFFER_BDP_SWEEP.map(|b| inter_fairness_cell(c, b, FAIRNESS_SECS)))
            .collect(),
        Suite::RttFairness => CcaKind::ALL
            .into_iter()
            .flat_map(|k| BUFFER_BDP_SWEEP.map(|b| rtt_fairness_cell(k, b, FAIRNESS_SECS)))
            .collect(),
        Suite::RetxHeatmap => {
            let mut bws = HEATMAP_BANDWIDTHS_MBPS.to_vec();
            if full_grid {
                bws.extend(HEATMAP_EXTRA_BANDWIDTHS_MBPS);
            }
            CcaKind::ALL
                .into_iter()
                .flat_map(|k| {
                    bws.iter().flat_map(move |&bw| {
                        HEATMAP_RTTS_MS.map(|rtt| heatmap_cell(k, bw, rtt, HEATMAP_SECS))
                    })
                })
                .collect()
        }
        Suite::LossResilience => loss_contenders()
            .iter()
            .flat_map(|c| LOSS_SWEEP.map(|p| loss_cell(c, p, 60.0)))
            .collect(),
        Suite::Responsiveness => {
            let w = RESPONSIVENESS_WARMUP_S;
            let schedules = [
                ("increase", staircase(w, 20.0, 40.0)),
                ("decrease", staircase(w, 40.0, 20.0)),
            ];
            CcaKind::ALL
                .into_iter()
                .flat_map(|k| {
                    schedules
                        .iter()
                        .map(move |(name, s)| responsiveness_cell(k, name, s.clone(), w + 14.0))
                })
                .collect()
        }
        Suite::Jitter => CcaKind::ALL
            .into_iter()
            .flat_map(|k| JITTER_SWEEP_MS.map(|j| jitter_cell(k, j, 60.0)))
            .collect(),
        Suite::StepTraces => {
            let schedules = step_trace_schedules();
            CcaKind::ALL
                .into_iter()
                .flat_map(|k| {
                    schedules
                        .iter()
                        .map(move |(name, s)| step_trace_cell(k, name, s.clone(), STEP_TRACE_SECS))
                })
                .collect()
        }
    }
}

#[derive(Clone, Debug)]
pub struct SuiteOptions {
    pub base_seed: u64,
    pub repetitions: u32,
    pub full_grid: bool,
    pub execution: Execution,
    /// Write one telemetry CSV per run.
    pub telemetry: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            base_seed: 1,
            repetitions: 5,
            full_grid: false,
            execution: Execution::Parallel { jobs: 0 },
            telemetry: true,
        }
    }
}

impl SuiteOptions {
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repetitions as u64).map(|r| self.base_seed.wrapping_add(r)).collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error("cell {cell}: {source}")]
    Scenario { cell: String, source: ScenarioError },
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("writing {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteOutput {
    pub per_seed: Vec<FlowRecord>,
    pub summary: Vec<SummaryRecord>,
    pub dir: Option<PathBuf>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SuiteError + '_ {
    move |source| SuiteError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> SuiteError + '_ {
    move |source| SuiteError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Runs every cell once per seed. With an output directory, writes
/// `<out>/<suite>/{per_seed.csv, summary.csv, scenarios/*.toml, cells/*.csv}`.
pub fn run_cells(
    suite_name: &str,
    cells: &[Cell],
    opts: &SuiteOptions,
    out: Option<&Path>,
) -> Result<SuiteOutput, SuiteError> {
    let dir = out.map(|o| o.join(suite_name));
    if let Some(dir) = &dir {
        for sub in ["scenarios", "cells"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        for c in cells {
            let p = dir.join("scenarios").join(format!("{}.toml", c.id));
            fs::write(&p, c.scenario.to_toml_string()).map_err(io_err(&p))?;
        }
    }
    let jobs: Vec<(&Cell, u64)> = cells
        .iter()
        .flat_map(|c| opts.seeds().into_iter().map(move |s| (c, s)))
        .collect();
    let telemetry_dir = dir.as_ref().filter(|_| opts.telemetry).map(|d| d.join("cells"));
    let results = execute(jobs, opts.execution, |(cell, seed)| {
        run_one(suite_name, cell, seed, telemetry_dir.as_deref())
    });
    let mut per_seed = Vec::new();
    for r in results {
        per_seed.extend(r?);
    }
    let summary = output::summarize(&per_seed);
    if let Some(dir) = &dir {
        let p = dir.join("per_seed.csv");
        output::write_records(&p, &per_seed).map_err(csv_err(&p))?;
        let p = dir.join("summary.csv");
        output::write_records(&p, &summary).map_err(csv_err(&p))?;
    }
    Ok(SuiteOutput {
        per_seed,
        summary,
        dir,
    })
}

fn run_one(
    suite_name: &str,
    cell: &Cell,
    seed: u64,
    telemetry_dir: Option<&Path>,
) -> Result<Vec<FlowRecord>, SuiteError> {
    let scenario_err = |source| SuiteError::Scenario {
        cell: cell.id.clone(),
        source,
    };
    let cfg = cell.scenario.to_sim_config(seed, Path::new(".")).map_err(scenario_err)?;
    let buffer_bytes = cfg.link.buffer_bytes;
    let result = ccsim_netsim::run(&cfg)
        .map_err(|e| scenario_err(ScenarioError::Sim(e)))?;
    if let Some(dir) = telemetry_dir {
        let p = dir.join(format!("{}__seed{seed}.csv", cell.id));
        fs::write(&p, output::telemetry_csv(&result)).map_err(io_err(&p))?;
    }
    Ok(flow_records(
        suite_name,
        &cell.id,
        &cell.axes,
        &cell.scenario,
        seed,
        buffer_bytes,
        &result,
    ))
}

pub fn run_suite(suite: Suite, opts: &SuiteOptions, out: Option<&Path>) -> Result<SuiteOutput, SuiteError> {
    run_cells(suite.name(), &cells(suite, opts.full_grid), opts, out)
}
