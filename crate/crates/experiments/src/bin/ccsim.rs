use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand};

use ccsim_experiments::output::{self, CellAxes};
use ccsim_experiments::report::{self, ReportKind};
use ccsim_experiments::runner::flow_records;
use ccsim_experiments::{run_suite, Execution, Scenario, Suite, SuiteOptions};

#[derive(Parser)]
#[command(name = "ccsim", version, about = "Congestion-control simulator and experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, env = "CCSIM_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a named experiment suite.
    Suite {
        name: Suite,
        #[arg(long)]
        out: PathBuf,
        /// Include the high-bandwidth heatmap columns.
        #[arg(long)]
        full_grid: bool,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long, env = "CCSIM_SEED", default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        repetitions: u32,
        /// Skip the per-run telemetry CSVs.
        #[arg(long)]
        no_telemetry: bool,
    },
    /// Summarize suite results.
    Metrics {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        report: ReportKind,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run { scenario, seed, out } => run(&scenario, seed, &out),
        Command::Suite {
            name,
            out,
            full_grid,
            jobs,
            seed,
            repetitions,
            no_telemetry,
        } => {
            let opts = SuiteOptions {
                base_seed: seed,
                repetitions,
                full_grid,
                execution: Execution::from_jobs(jobs),
                telemetry: !no_telemetry,
            };
            let res = run_suite(name, &opts, Some(&out))?;
            let bad = res.per_seed.iter().filter(|r| !r.conservation_ok).count();
            anyhow::ensure!(bad == 0, "{bad} runs violated conservation");
            println!(
                "{name}: {} runs, {} summary rows in {}",
                res.per_seed.len(),
                res.summary.len(),
                res.dir.unwrap().display()
            );
            Ok(())
        }
        Command::Metrics { input, report } => metrics(&input, report),
    }
}

fn run(path: &Path, seed: Option<u64>, out: &Path) -> anyhow::Result<()> {
    let scenario = Scenario::load(path)?;
    let seed = seed.or(scenario.seed).unwrap_or(1);
    let base = path.parent().unwrap_or(Path::new("."));
    let cfg = scenario.to_sim_config(seed, base)?;
    let result = ccsim_netsim::run(&cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("telemetry.csv"), output::telemetry_csv(&result))?;
    let records = flow_records(
        "run",
        &scenario.name,
        &CellAxes::default(),
        &scenario,
        seed,
        cfg.link.buffer_bytes,
        &result,
    );
    output::write_records(&out.join("per_seed.csv"), &records)?;
    output::write_records(&out.join("summary.csv"), &output::summarize(&records))?;
    for r in &records {
        println!(
            "flow {} {:<20} {:>8.3} Mbps  retx {:.4}  delay {}",
            r.flow_id,
            r.label,
            r.mean_throughput_mbps,
            r.retransmission_rate,
            r.mean_queuing_delay_ms.map(|d| format!("{d:.2} ms")).unwrap_or("-".into()),
        );
    }
    if let Some(j) = records.first().and_then(|r| r.jain_index) {
        println!("jain index {j:.4}");
    }
    anyhow::ensure!(result.conservation_ok(), "conservation check failed");
    Ok(())
}

fn metrics(input: &Path, kind: ReportKind) -> anyhow::Result<()> {
    let rows = report::load_summaries(input)?;
    let text = match kind {
        ReportKind::Fairness => report::to_csv(&report::fairness(&rows))?,
        ReportKind::Heatmap => report::to_csv(&report::heatmap(&rows))?,
        ReportKind::Normalized => {
            let (rows, excluded) = report::normalized(&rows);
            for t in excluded {
                eprintln!("warning: trace `{t}` excluded (no throughput or delay baseline)");
            }
            report::to_csv(&rows)?
        }
    };
    let path = input.join(format!("report_{kind}.csv"));
    fs::write(&path, &text)?;
    print!("{text}");
    Ok(())
}
