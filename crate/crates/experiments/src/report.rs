//! Reports derived from suite summaries.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::metrics::{jain_index_n, normalize_tput_delay, tput_gain, TraceResult};
use crate::output::{read_records, SummaryRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportKind {
    Fairness,
    Heatmap,
    Normalized,
}

impl FromStr for ReportKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fairness" => Ok(ReportKind::Fairness),
            "heatmap" => Ok(ReportKind::Heatmap),
            "normalized" => Ok(ReportKind::Normalized),
            _ => Err(format!("unknown report `{s}`; expected fairness, heatmap or normalized")),
        }
    }
}

impl fmt::Display for ReportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportKind::Fairness => "fairness",
            ReportKind::Heatmap => "heatmap",
            ReportKind::Normalized => "normalized",
        })
    }
}

/// Finds `summary.csv` in `dir` or in its immediate subdirectories.
pub fn find_summaries(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let direct = dir.join("summary.csv");
    if direct.is_file() {
        return Ok(vec![direct]);
    }
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path().join("summary.csv");
        if p.is_file() {
            found.push(p);
        }
    }
    found.sort();
    Ok(found)
}

pub fn load_summaries(dir: &Path) -> anyhow::Result<Vec<SummaryRecord>> {
    let paths = find_summaries(dir)?;
    anyhow::ensure!(!paths.is_empty(), "no summary.csv under {}", dir.display());
    let mut rows = Vec::new();
    for p in paths {
        rows.extend(read_records::<SummaryRecord>(&p)?);
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FairnessRow {
    pub suite: String,
    pub cell: String,
    pub buffer_bdp: Option<f64>,
    pub flows: String,
    pub throughputs_mbps: String,
    /// Fairness of the seed-averaged throughputs.
    pub jain_of_means: Option<f64>,
    /// Seed average of per-run fairness.
    pub mean_jain: Option<f64>,
}

pub fn fairness(rows: &[SummaryRecord]) -> Vec<FairnessRow> {
    let mut cells: Vec<(String, Vec<&SummaryRecord>)> = Vec::new();
    for r in rows {
        match cells.iter_mut().find(|(c, _)| *c == r.cell) {
            Some((_, v)) => v.push(r),
            None => cells.push((r.cell.clone(), vec![r])),
        }
    }
    cells
        .into_iter()
        .filter(|(_, v)| v.len() > 1)
        .map(|(cell, v)| {
            let t: Vec<f64> = v.iter().map(|r| r.mean_throughput_mbps).collect();
            FairnessRow {
                suite: v[0].suite.clone(),
                cell,
                buffer_bdp: v[0].buffer_bdp,
                flows: v.iter().map(|r| r.label.as_str()).collect::<Vec<_>>().join("|"),
                throughputs_mbps: t.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("|"),
                jain_of_means: jain_index_n(&t),
                mean_jain: v[0].jain_index,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeatmapRow {
    pub bandwidth_mbps: f64,
    pub rtt_ms: f64,
    pub bdp_bytes: f64,
    pub cca: String,
    pub throughput_mbps: f64,
    pub retransmission_rate: f64,
    /// Relative throughput advantage of BBR over BBRv2 in this cell.
    pub tput_gain_bbr_over_bbr2: Option<f64>,
}

pub fn heatmap(rows: &[SummaryRecord]) -> Vec<HeatmapRow> {
    let mut grid: BTreeMap<(u64, u64), BTreeMap<String, &SummaryRecord>> = BTreeMap::new();
    for r in rows {
        if let (Some(bw), Some(rtt)) = (r.bandwidth_mbps, r.rtt_ms) {
            grid.entry((bw.to_bits(), rtt.to_bits()))
                .or_default()
                .insert(r.label.clone(), r);
        }
    }
    let mut out = Vec::new();
    for ((bw, rtt), by_cca) in grid {
        let (bw, rtt) = (f64::from_bits(bw), f64::from_bits(rtt));
        let gain = match (by_cca.get("bbr"), by_cca.get("bbr2")) {
            (Some(a), Some(b)) => tput_gain(a.mean_throughput_mbps, b.mean_throughput_mbps),
            _ => None,
        };
        for (cca, r) in by_cca {
            out.push(HeatmapRow {
                bandwidth_mbps: bw,
                rtt_ms: rtt,
                bdp_bytes: bw * 1e6 / 8.0 * rtt / 1e3,
                cca,
                throughput_mbps: r.mean_throughput_mbps,
                retransmission_rate: r.retransmission_rate,
                tput_gain_bbr_over_bbr2: gain,
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormalizedRow {
    pub cca: String,
    pub throughput: f64,
    pub mean_delay: f64,
    pub p95_delay: f64,
    pub traces: usize,
}

/// Normalizes per schedule across CCAs. Returns the rows and the traces
/// that had to be excluded.
pub fn normalized(rows: &[SummaryRecord]) -> (Vec<NormalizedRow>, Vec<String>) {
    let results: Vec<TraceResult> = rows
        .iter()
        .filter_map(|r| {
            Some(TraceResult {
                trace: r.schedule.clone()?,
                cca: r.label.clone(),
                mean_throughput: r.mean_throughput_mbps,
                mean_delay: r.mean_queuing_delay_ms?,
                p95_delay: r.p95_queuing_delay_ms?,
            })
        })
        .collect();
    let n = normalize_tput_delay(&results);
    let rows = n
        .summaries
        .into_iter()
        .map(|s| NormalizedRow {
            cca: s.cca,
            throughput: s.throughput,
            mean_delay: s.mean_delay,
            p95_delay: s.p95_delay,
            traces: s.traces,
        })
        .collect();
    (rows, n.excluded)
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> csv::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
