//! Fairness, throughput gain and trace-normalized summaries.

use std::collections::BTreeMap;

/// Jain's fairness index of two throughputs; `None` when both are zero.
pub fn jain_index(t1: f64, t2: f64) -> Option<f64> {
    jain_index_n(&[t1, t2])
}

/// `(sum t)^2 / (n * sum t^2)`; `None` for an empty or all-zero input.
pub fn jain_index_n(t: &[f64]) -> Option<f64> {
    let sum: f64 = t.iter().sum();
    let sq: f64 = t.iter().map(|x| x * x).sum();
    (sq > 0.0).then(|| sum * sum / (t.len() as f64 * sq))
}

/// Relative throughput advantage of the first flow over the second;
/// `None` when the second is zero.
pub fn tput_gain(t_first: f64, t_second: f64) -> Option<f64> {
    (t_second > 0.0).then(|| (t_first - t_second) / t_second)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Sample standard deviation; zero for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values).unwrap();
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    var.sqrt()
}

/// One CCA's result on one trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceResult {
    pub trace: String,
    pub cca: String,
    pub mean_throughput: f64,
    pub mean_delay: f64,
    pub p95_delay: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedSummary {
    pub cca: String,
    /// Mean over traces of throughput divided by the best throughput.
    pub throughput: f64,
    /// Mean over traces of delay divided by the lowest mean delay.
    pub mean_delay: f64,
    pub p95_delay: f64,
    pub traces: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Normalized {
    pub summaries: Vec<NormalizedSummary>,
    /// Traces left out because nothing was delivered on them.
    pub excluded: Vec<String>,
}

/// Normalizes each trace's results to its best throughput and lowest delay,
/// then averages over traces per CCA. Traces with fewer than two CCAs or
/// with no throughput or delay baseline are excluded.
pub fn normalize_tput_delay(results: &[TraceResult]) -> Normalized {
    let mut by_trace: BTreeMap<&str, Vec<&TraceResult>> = BTreeMap::new();
    for r in results {
        by_trace.entry(&r.trace).or_default().push(r);
    }
    let mut acc: BTreeMap<&str, (Vec<f64>, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut out = Normalized::default();
    for (trace, rows) in by_trace {
        let max_tput = rows.iter().map(|r| r.mean_throughput).fold(0.0, f64::max);
        let min_delay = rows.iter().map(|r| r.mean_delay).fold(f64::INFINITY, f64::min);
        let min_p95 = rows.iter().map(|r| r.p95_delay).fold(f64::INFINITY, f64::min);
        if rows.len() < 2 || !(max_tput > 0.0) || !(min_delay > 0.0) || !(min_p95 > 0.0) {
            out.excluded.push(trace.to_string());
            continue;
        }
        for r in rows {
            let e = acc.entry(&r.cca).or_default();
            e.0.push(r.mean_throughput / max_tput);
            e.1.push(r.mean_delay / min_delay);
            e.2.push(r.p95_delay / min_p95);
        }
    }
    out.summaries = acc
        .into_iter()
        .map(|(cca, (t, d, p))| NormalizedSummary {
            cca: cca.to_string(),
            throughput: mean(&t).unwrap(),
            mean_delay: mean(&d).unwrap(),
            p95_delay: mean(&p).unwrap(),
            traces: t.len(),
        })
        .collect();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn jain_examples() {
        assert_eq!(jain_index(20.0, 20.0), Some(1.0));
        assert_eq!(jain_index(7.0, 0.0), Some(0.5));
        assert!(close(jain_index(30.0, 10.0).unwrap(), 0.8));
        assert_eq!(jain_index(0.0, 0.0), None);
    }

    #[test]
    fn gain_examples() {
        assert!(close(tput_gain(40.0, 32.0).unwrap(), 0.25));
        assert_eq!(tput_gain(5.0, 5.0), Some(0.0));
        assert_eq!(tput_gain(5.0, 0.0), None);
    }

    fn row(trace: &str, cca: &str, t: f64, d: f64) -> TraceResult {
        TraceResult {
            trace: trace.into(),
            cca: cca.into(),
            mean_throughput: t,
            mean_delay: d,
            p95_delay: 2.0 * d,
        }
    }

    #[test]
    fn normalization_examples() {
        let n = normalize_tput_delay(&[row("a", "x", 30.0, 4.0), row("a", "y", 40.0, 2.0)]);
        let x = &n.summaries[0];
        assert!(close(x.throughput, 0.75));
        assert!(close(x.mean_delay, 2.0));
        let y = &n.summaries[1];
        assert!(close(y.mean_delay, 1.0));
        assert!(close(y.throughput, 1.0));

        let n = normalize_tput_delay(&[
            row("a", "x", 30.0, 1.0),
            row("a", "y", 40.0, 1.0),
            row("b", "x", 34.0, 1.0),
            row("b", "y", 40.0, 1.0),
        ]);
        assert!(close(n.summaries[0].throughput, 0.8));
        assert_eq!(n.summaries[0].traces, 2);
    }

    #[test]
    fn degenerate_trace_is_excluded() {
        let n = normalize_tput_delay(&[
            row("dead", "x", 0.0, 1.0),
            row("dead", "y", 0.0, 1.0),
            row("ok", "x", 10.0, 1.0),
            row("ok", "y", 20.0, 2.0),
        ]);
        assert_eq!(n.excluded, vec!["dead".to_string()]);
        assert_eq!(n.summaries[0].traces, 1);
    }
}
