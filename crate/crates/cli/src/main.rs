use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ampc_eki::harness::{compare_methods, read_summary, run_experiment, write_table, ExperimentConfig, Problem, SummaryReport};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ampc-eki", version, about = "Ensemble Kalman inversion with adaptive multi-fidelity surrogates")]
struct Cli {
    /// Worker threads for repeats and batched model evaluations (default: all cores).
    #[arg(long, global = true, env = "AMPC_EKI_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Override a config entry, e.g. `--set method.tol=1e-3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the truth and synthetic observations of a config and write them as JSON.
    GenerateData {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(short, long, default_value = "data.json")]
        output: PathBuf,
    },
    /// Run every repeat of one experiment.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(short, long, default_value = "out")]
        output: PathBuf,
    },
    /// Run several methods on the same problem, data and seeds.
    Compare {
        #[arg(required = true, num_args = 1..)]
        configs: Vec<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(short, long, default_value = "out")]
        output: PathBuf,
    },
    /// Print the cost table of finished runs (summary.json files or their directories).
    Report {
        #[arg(required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
    },
}

fn print_report(report: &SummaryReport) {
    println!("{}: {} of {} repeats completed", report.label, report.completed, report.repeats);
    for (key, s) in &report.stats {
        println!("  {key:<16} mean {:<12.6} q20 {:<12.6} q80 {:<12.6}", s.mean, s.q20, s.q80);
    }
}

fn summary_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("summary.json")
    } else {
        p.to_path_buf()
    }
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker pool")?;
    }
    match cli.command {
        Command::GenerateData { config, overrides, output } => {
            let cfg = ExperimentConfig::load(&config, &overrides.set)?;
            let problem = Problem::build(&cfg)?;
            let json = serde_json::json!({
                "truth": problem.truth,
                "truth_field": problem.truth_field(),
                "y": problem.data.y,
                "clean": problem.data.clean,
                "sigma": problem.data.sigma,
                "eta": problem.data.eta,
            });
            std::fs::write(&output, serde_json::to_string_pretty(&json)?)
                .with_context(|| format!("writing {}", output.display()))?;
            println!("wrote {} observations to {} (eta = {:.4})", problem.data.y.len(), output.display(), problem.data.eta);
            Ok(true)
        }
        Command::Run { config, overrides, output } => {
            let cfg = ExperimentConfig::load(&config, &overrides.set)?;
            let report = run_experiment(&cfg, Some(&output))?;
            print_report(&report);
            print!("{}", write_table(&[report.row()]));
            Ok(report.failed == 0)
        }
        Command::Compare { configs, overrides, output } => {
            let cfgs = configs
                .iter()
                .map(|c| ExperimentConfig::load(c, &overrides.set))
                .collect::<Result<Vec<_>, _>>()?;
            let (rows, reports) = compare_methods(&cfgs, Some(&output))?;
            for r in &reports {
                print_report(r);
            }
            print!("{}", write_table(&rows));
            Ok(reports.iter().all(|r| r.failed == 0))
        }
        Command::Report { inputs } => {
            let mut rows = Vec::new();
            for p in &inputs {
                let report = read_summary(&summary_path(p))?;
                print_report(&report);
                rows.push(report.row());
            }
            if rows.is_empty() {
                bail!("no summaries given");
            }
            print!("{}", write_table(&rows));
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            log::error!("some repeats failed; see summary.json");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
