use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ccsim_experiments::output::{read_records, SummaryRecord};

const SCENARIO: &str = r#"
name = "cli-smoke"
duration_s = 3

[bottleneck]
rate_mbps = 20
buffer_bdp = 2

[[flows]]
cca = "cubic"
base_rtt_ms = 20

[[flows]]
cca = "bbr2plus"
base_rtt_ms = 20
start_s = 0.5
"#;

fn ccsim(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ccsim"));
    cmd.args(args).env_remove("CCSIM_SEED");
    if let Some(s) = seed {
        cmd.env("CCSIM_SEED", s);
    }
    cmd.output().expect("spawn ccsim")
}

fn run_scenario(dir: &Path, out: &str, seed_arg: Option<&str>, env_seed: Option<&str>) -> Output {
    let scenario = dir.join("s.toml");
    fs::write(&scenario, SCENARIO).unwrap();
    let out = dir.join(out);
    let mut args = vec!["run", "--scenario", scenario.to_str().unwrap(), "--out", out.to_str().unwrap()];
    if let Some(s) = seed_arg {
        args.extend(["--seed", s]);
    }
    ccsim(&args, env_seed)
}

#[test]
fn run_writes_telemetry_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_scenario(tmp.path(), "out", Some("3"), None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("jain index"), "{stdout}");

    let telemetry = fs::read_to_string(tmp.path().join("out/telemetry.csv")).unwrap();
    let header = telemetry.lines().next().unwrap();
    assert_eq!(
        header,
        "time_s,flow_id,cca,state,throughput_mbps,srtt_ms,rtprop_est_ms,btlbw_est_mbps,\
         pacing_rate_mbps,cwnd_bytes,inflight_bytes,retx_cum,queue_len_bytes,probe_bw_mode"
    );
    assert!(telemetry.lines().count() > 2);

    let rows: Vec<SummaryRecord> = read_records(&tmp.path().join("out/summary.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.mean_throughput_mbps > 0.0));
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.retransmission_rate)));
}

#[test]
fn seed_env_var_matches_flag() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run_scenario(tmp.path(), "flag", Some("11"), None).status.success());
    assert!(run_scenario(tmp.path(), "env", None, Some("11")).status.success());
    let a = fs::read(tmp.path().join("flag/telemetry.csv")).unwrap();
    let b = fs::read(tmp.path().join("env/telemetry.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn invalid_scenario_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = tmp.path().join("bad.toml");
    fs::write(&scenario, SCENARIO.replace("\"bbr2plus\"", "\"reno\"")).unwrap();
    let out = tmp.path().join("out");
    let res = ccsim(
        &["run", "--scenario", scenario.to_str().unwrap(), "--out", out.to_str().unwrap()],
        None,
    );
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("reno"));
}

#[test]
fn unknown_suite_and_report_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert!(!ccsim(&["suite", "no_such_suite", "--out", out], None).status.success());
    assert!(!ccsim(&["metrics", "--in", out, "--report", "pie"], None).status.success());
    assert!(!ccsim(&["metrics", "--in", out, "--report", "fairness"], None).status.success());
}

#[test]
fn metrics_reports_run_summary() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run_scenario(tmp.path(), "out", Some("1"), None).status.success());
    let dir = tmp.path().join("out");
    let res = ccsim(&["metrics", "--in", dir.to_str().unwrap(), "--report", "fairness"], None);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report = fs::read_to_string(dir.join("report_fairness.csv")).unwrap();
    assert!(report.starts_with("suite,cell,buffer_bdp,flows,throughputs_mbps,jain_of_means,mean_jain"));
    assert_eq!(report.lines().count(), 2);
}
