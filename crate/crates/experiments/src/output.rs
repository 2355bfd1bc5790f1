//! CSV emission: per-tick telemetry, per-seed flow records and suite
//! summaries.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use ccsim_netsim::{FlowSample, SimResult};

use crate::metrics::{mean, std_dev};

pub const TELEMETRY_HEADER: [&str; 14] = [
    "time_s",
    "flow_id",
    "cca",
    "state",
    "throughput_mbps",
    "srtt_ms",
    "rtprop_est_ms",
    "btlbw_est_mbps",
    "pacing_rate_mbps",
    "cwnd_bytes",
    "inflight_bytes",
    "retx_cum",
    "queue_len_bytes",
    "probe_bw_mode",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn telemetry_row(s: &FlowSample) -> [String; 14] {
    [
        s.time_s.to_string(),
        s.flow_id.to_string(),
        s.cca.to_string(),
        s.state.to_string(),
        s.throughput_mbps.to_string(),
        opt(s.srtt_ms),
        opt(s.rtprop_est_ms),
        opt(s.btlbw_est_mbps),
        s.pacing_rate_mbps.to_string(),
        s.cwnd_bytes.to_string(),
        s.inflight_bytes.to_string(),
        s.retx_cum.to_string(),
        s.queue_len_bytes.to_string(),
        s.probe_bw_mode.map(|m| m.name().to_string()).unwrap_or_default(),
    ]
}

/// Writes the telemetry series; an empty series still gets a header.
pub fn write_telemetry<W: Write>(result: &SimResult, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TELEMETRY_HEADER)?;
    for s in &result.samples {
        w.write_record(telemetry_row(s))?;
    }
    w.flush()?;
    Ok(())
}

pub fn telemetry_csv(result: &SimResult) -> Vec<u8> {
    let mut buf = Vec::new();
    write_telemetry(result, &mut buf).expect("writing to memory");
    buf
}

/// Coordinates of a cell in its suite's grid; unused axes are empty.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CellAxes {
    pub bandwidth_mbps: Option<f64>,
    pub rtt_ms: Option<f64>,
    pub buffer_bdp: Option<f64>,
    pub loss_prob: Option<f64>,
    pub jitter_mean_ms: Option<f64>,
    pub schedule: Option<String>,
}

/// One flow's outcome in one seeded run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub suite: String,
    pub cell: String,
    pub seed: u64,
    pub bandwidth_mbps: Option<f64>,
    pub rtt_ms: Option<f64>,
    pub buffer_bdp: Option<f64>,
    pub loss_prob: Option<f64>,
    pub jitter_mean_ms: Option<f64>,
    pub schedule: Option<String>,
    pub buffer_bytes: u64,
    pub flow_id: u32,
    pub label: String,
    pub cca: String,
    pub base_rtt_ms: f64,
    pub mean_throughput_mbps: f64,
    pub retransmission_rate: f64,
    pub mean_queuing_delay_ms: Option<f64>,
    pub p95_queuing_delay_ms: Option<f64>,
    pub mean_rtt_ms: Option<f64>,
    pub mean_inflight_bytes: f64,
    pub mode_switches: u32,
    /// Cell-level: fairness across all flows of the run.
    pub jain_index: Option<f64>,
    pub conservation_ok: bool,
}

/// Seed-averaged flow outcome for one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub suite: String,
    pub cell: String,
    pub seeds: usize,
    pub bandwidth_mbps: Option<f64>,
    pub rtt_ms: Option<f64>,
    pub buffer_bdp: Option<f64>,
    pub loss_prob: Option<f64>,
    pub jitter_mean_ms: Option<f64>,
    pub schedule: Option<String>,
    pub buffer_bytes: u64,
    pub flow_id: u32,
    pub label: String,
    pub cca: String,
    pub base_rtt_ms: f64,
    pub mean_throughput_mbps: f64,
    pub throughput_sd_mbps: f64,
    pub retransmission_rate: f64,
    pub mean_queuing_delay_ms: Option<f64>,
    pub p95_queuing_delay_ms: Option<f64>,
    pub mean_rtt_ms: Option<f64>,
    pub mean_inflight_bytes: f64,
    pub mode_switches: f64,
    pub jain_index: Option<f64>,
    pub conservation_ok: bool,
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.and_then(|v| mean(&v))
}

/// Averages per-seed records over seeds, grouped by `(cell, flow_id)`.
/// Output keeps the order in which cells first appear.
pub fn summarize(records: &[FlowRecord]) -> Vec<SummaryRecord> {
    let mut order: Vec<(String, u32)> = Vec::new();
    let mut groups: BTreeMap<(String, u32), Vec<&FlowRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.cell.clone(), r.flow_id);
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let first = g[0];
            let f = |get: fn(&FlowRecord) -> f64| -> Vec<f64> { g.iter().map(|r| get(r)).collect() };
            let tput = f(|r| r.mean_throughput_mbps);
            SummaryRecord {
                suite: first.suite.clone(),
                cell: first.cell.clone(),
                seeds: g.len(),
                bandwidth_mbps: first.bandwidth_mbps,
                rtt_ms: first.rtt_ms,
                buffer_bdp: first.buffer_bdp,
                loss_prob: first.loss_prob,
                jitter_mean_ms: first.jitter_mean_ms,
                schedule: first.schedule.clone(),
                buffer_bytes: first.buffer_bytes,
                flow_id: first.flow_id,
                label: first.label.clone(),
                cca: first.cca.clone(),
                base_rtt_ms: first.base_rtt_ms,
                mean_throughput_mbps: mean(&tput).unwrap(),
                throughput_sd_mbps: std_dev(&tput),
                retransmission_rate: mean(&f(|r| r.retransmission_rate)).unwrap(),
                mean_queuing_delay_ms: mean_opt(g.iter().map(|r| r.mean_queuing_delay_ms)),
                p95_queuing_delay_ms: mean_opt(g.iter().map(|r| r.p95_queuing_delay_ms)),
                mean_rtt_ms: mean_opt(g.iter().map(|r| r.mean_rtt_ms)),
                mean_inflight_bytes: mean(&f(|r| r.mean_inflight_bytes)).unwrap(),
                mode_switches: mean(&f(|r| r.mode_switches as f64)).unwrap(),
                jain_index: mean_opt(g.iter().map(|r| r.jain_index)),
                conservation_ok: g.iter().all(|r| r.conservation_ok),
            }
        })
        .collect()
}

pub fn write_records<T: Serialize>(path: &Path, rows: &[T]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<T: for<'de> Deserialize<'de>>(path: &Path) -> csv::Result<Vec<T>> {
    csv::Reader::from_path(path)?.deserialize().collect()
}
