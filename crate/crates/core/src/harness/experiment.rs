use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, MethodConfig, ProblemKind};
use super::problem::{Problem, ProblemModel};
use super::{HarnessError, Stats};
use crate::ampc::{build_prior_surrogate, run_ampc, EvalBudgetLedger};
use crate::eki::{run_eki, EkiConfig, RunTrace, StopReason};
use crate::models::write_snapshot;
use crate::pce::MultiIndexSet;

/// Outcome of one repeat. Failed repeats carry `error` and no statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub repeat: usize,
    pub seed: u64,
    pub rel: Option<f64>,
    /// Analysis steps taken (J1).
    pub iterations: usize,
    /// Refinements (J2); zero except for AMPC.
    pub refinements: usize,
    pub offline_evals: usize,
    pub online_evals: usize,
    pub offline_seconds: f64,
    pub online_seconds: f64,
    pub total_seconds: f64,
    pub stop: Option<StopReason>,
    pub final_misfit: Option<f64>,
    /// tau * eta.
    pub threshold: Option<f64>,
    pub ledger: Option<EvalBudgetLedger>,
    pub mean: Vec<f64>,
    pub error: Option<String>,
    #[serde(skip)]
    pub trace_csv: String,
}

impl RunResult {
    fn failed(repeat: usize, seed: u64, error: String) -> Self {
        Self {
            repeat,
            seed,
            rel: None,
            iterations: 0,
            refinements: 0,
            offline_evals: 0,
            online_evals: 0,
            offline_seconds: 0.0,
            online_seconds: 0.0,
            total_seconds: 0.0,
            stop: None,
            final_misfit: None,
            threshold: None,
            ledger: None,
            mean: Vec::new(),
            error: Some(error),
            trace_csv: String::new(),
        }
    }

    fn from_trace(repeat: usize, seed: u64, trace: &RunTrace, mean: Vec<f64>) -> Self {
        Self {
            rel: trace.final_rel,
            iterations: trace.analyses,
            stop: Some(trace.stop),
            final_misfit: trace.last_misfit(),
            threshold: Some(trace.tau * trace.eta),
            mean,
            error: None,
            ..Self::failed(repeat, seed, String::new())
        }
    }
}

/// Runs repeat `repeat` of `cfg` on an already built problem.
pub fn run_repeat(problem: &Problem, cfg: &ExperimentConfig, repeat: usize) -> RunResult {
    let seed = cfg.run.seed + repeat as u64;
    let y = problem.y();
    let rel = |t: &[f64]| problem.rel(t);
    let rel: &(dyn Fn(&[f64]) -> f64 + Sync) = &rel;
    let eki = EkiConfig { noise_level: problem.noise_level, ..cfg.eki_config(seed) };
    let timing = cfg.run.trace_timing;
    let start = Instant::now();
    match &cfg.method {
        MethodConfig::Direct => match run_eki(problem.forward(), &eki, &y, &problem.noise, &problem.prior, Some(rel)) {
            Ok(out) => {
                let mut r = RunResult::from_trace(repeat, seed, &out.trace, out.mean.as_slice().to_vec());
                r.online_evals = out.trace.forward_evaluations;
                r.online_seconds = start.elapsed().as_secs_f64();
                r.total_seconds = r.online_seconds;
                r.trace_csv = out.trace.to_csv(timing);
                r
            }
            Err(e) => RunResult::failed(repeat, seed, e.to_string()),
        },
        MethodConfig::Pc { degree, q1 } => {
            let q1 = match q1 {
                Some(q) => *q,
                None => match MultiIndexSet::cardinality(problem.prior.dim(), *degree) {
                    Ok(m) => 2 * m,
                    Err(e) => return RunResult::failed(repeat, seed, e.to_string()),
                },
            };
            let surrogate = match build_prior_surrogate(problem.forward(), &problem.prior, *degree, q1, seed) {
                Ok(s) => s,
                Err(e) => return RunResult::failed(repeat, seed, e.to_string()),
            };
            let offline = start.elapsed().as_secs_f64();
            match run_eki(&surrogate, &eki, &y, &problem.noise, &problem.prior, Some(rel)) {
                Ok(out) => {
                    let mut r = RunResult::from_trace(repeat, seed, &out.trace, out.mean.as_slice().to_vec());
                    r.offline_evals = q1;
                    r.offline_seconds = offline;
                    r.total_seconds = start.elapsed().as_secs_f64();
                    r.online_seconds = r.total_seconds - offline;
                    r.trace_csv = out.trace.to_csv(timing);
                    r
                }
                Err(e) => RunResult::failed(repeat, seed, e.to_string()),
            }
        }
        MethodConfig::Ampc { .. } => {
            let ampc = cfg.ampc_config(seed).expect("ampc method");
            let ampc = crate::ampc::AmpcConfig { eki, ..ampc };
            match run_ampc(problem.forward(), &problem.prior, &y, &problem.noise, &ampc, Some(rel)) {
                Ok(out) => {
                    let mut r = RunResult::from_trace(repeat, seed, &out.trace, out.mean.as_slice().to_vec());
                    r.refinements = out.ledger.refinements;
                    r.offline_evals = out.ledger.offline;
                    r.online_evals = out.ledger.online();
                    r.offline_seconds = out.offline_seconds;
                    r.total_seconds = start.elapsed().as_secs_f64();
                    r.online_seconds = r.total_seconds - out.offline_seconds;
                    r.ledger = Some(out.ledger);
                    r.trace_csv = out.to_csv(timing);
                    r
                }
                Err(e) => {
                    let mut r = RunResult::failed(repeat, seed, e.to_string());
                    r.ledger = Some(e.ledger);
                    r
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub label: String,
    pub method: String,
    pub problem: ProblemKind,
    pub repeats: usize,
    pub completed: usize,
    pub failed: usize,
    pub data_eta: f64,
    /// Keys: rel, iterations, refinements, offline_evals, online_evals,
    /// offline_seconds, online_seconds, total_seconds.
    pub stats: BTreeMap<String, Stats>,
    pub runs: Vec<RunResult>,
}

impl SummaryReport {
    fn from_runs(cfg: &ExperimentConfig, problem: &Problem, runs: Vec<RunResult>) -> Self {
        let ok: Vec<&RunResult> = runs.iter().filter(|r| r.error.is_none()).collect();
        let mut stats = BTreeMap::new();
        let columns: [(&str, fn(&RunResult) -> f64); 8] = [
            ("rel", |r| r.rel.unwrap_or(f64::NAN)),
            ("iterations", |r| r.iterations as f64),
            ("refinements", |r| r.refinements as f64),
            ("offline_evals", |r| r.offline_evals as f64),
            ("online_evals", |r| r.online_evals as f64),
            ("offline_seconds", |r| r.offline_seconds),
            ("online_seconds", |r| r.online_seconds),
            ("total_seconds", |r| r.total_seconds),
        ];
        for (name, get) in columns {
            let v: Vec<f64> = ok.iter().map(|r| get(r)).collect();
            if let Some(s) = Stats::of(&v) {
                stats.insert(name.to_string(), s);
            }
        }
        Self {
            label: cfg.method.label(),
            method: cfg.method.name().to_string(),
            problem: cfg.problem.kind,
            repeats: runs.len(),
            completed: ok.len(),
            failed: runs.len() - ok.len(),
            data_eta: problem.data.eta,
            stats,
            runs,
        }
    }

    fn mean(&self, key: &str) -> f64 {
        self.stats.get(key).map(|s| s.mean).unwrap_or(f64::NAN)
    }

    /// Table row with means over completed repeats; Direct has no offline
    /// phase and PC no online high-fidelity evaluations.
    pub fn row(&self) -> ComparisonRow {
        ComparisonRow {
            method: self.label.clone(),
            offline_evals: (self.method != "direct").then(|| self.mean("offline_evals")),
            offline_seconds: (self.method != "direct").then(|| self.mean("offline_seconds")),
            online_evals: (self.method != "pc").then(|| self.mean("online_evals")),
            online_seconds: self.mean("online_seconds"),
            total_seconds: self.mean("total_seconds"),
            rel: self.mean("rel"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub offline_evals: Option<f64>,
    pub offline_seconds: Option<f64>,
    pub online_evals: Option<f64>,
    pub online_seconds: f64,
    pub total_seconds: f64,
    pub rel: f64,
}

/// CSV in the layout of the cost tables; missing entries are written as `-`.
pub fn write_table(rows: &[ComparisonRow]) -> String {
    let dash = |v: Option<f64>, prec: usize| v.map(|x| format!("{x:.prec$}")).unwrap_or_else(|| "-".into());
    let mut out = String::from("method,offline_evals,offline_seconds,online_evals,online_seconds,total_seconds,rel\n");
    for r in rows {
        writeln!(
            out,
            "\"{}\",{},{},{},{:.3},{:.3},{:.4}",
            r.method,
            dash(r.offline_evals, 1),
            dash(r.offline_seconds, 3),
            dash(r.online_evals, 1),
            r.online_seconds,
            r.total_seconds,
            r.rel
        )
        .unwrap();
    }
    out
}

fn write_field(problem: &Problem, values: &[f64], path: &Path) -> Result<(), HarnessError> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    match &problem.model {
        ProblemModel::Tfpde(m) => write_snapshot(&mut f, &m.config().grid, values)?,
        ProblemModel::Linear(_) => {
            use std::io::Write;
            for v in values {
                writeln!(f, "{v:e}")?;
            }
        }
    }
    Ok(())
}

fn run_on_problem(problem: &Problem, cfg: &ExperimentConfig, out: Option<&Path>) -> Result<SummaryReport, HarnessError> {
    let runs: Vec<RunResult> = (0..cfg.run.repeats).into_par_iter().map(|r| run_repeat(problem, cfg, r)).collect();
    for r in runs.iter().filter(|r| r.error.is_some()) {
        log::warn!("repeat {} (seed {}) failed: {}", r.repeat, r.seed, r.error.as_deref().unwrap_or(""));
    }
    let report = SummaryReport::from_runs(cfg, problem, runs);
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        for r in report.runs.iter().filter(|r| r.error.is_none()) {
            fs::write(dir.join(format!("trace_{}.csv", r.repeat)), &r.trace_csv)?;
            write_field(problem, &problem.field(&r.mean)?, &dir.join(format!("field_{}.txt", r.repeat)))?;
        }
        write_field(problem, problem.truth_field(), &dir.join("truth_field.txt"))?;
        let json = serde_json::to_string_pretty(&report).map_err(|e| HarnessError::Io(e.to_string()))?;
        fs::write(dir.join("summary.json"), json)?;
        fs::write(dir.join("table.csv"), write_table(&[report.row()]))?;
        fs::write(dir.join("config.toml"), cfg.to_toml())?;
    }
    Ok(report)
}

/// Builds the problem and data, runs every repeat (concurrently) and, when
/// `out` is given, writes per-repeat traces and fields, `summary.json` and
/// `table.csv` there.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<SummaryReport, HarnessError> {
    cfg.validate()?;
    let problem = Problem::build(cfg)?;
    run_on_problem(&problem, cfg, out)
}

/// Runs several methods on one shared problem, data set and seed base. Each
/// method writes into its own subdirectory of `out`; the combined table goes
/// to `out/table.csv`.
pub fn compare_methods(
    configs: &[ExperimentConfig],
    out: Option<&Path>,
) -> Result<(Vec<ComparisonRow>, Vec<SummaryReport>), HarnessError> {
    let first = configs.first().ok_or_else(|| HarnessError::Config("no configs to compare".into()))?;
    let strip = |c: &ExperimentConfig| ExperimentConfig { method: MethodConfig::Direct, ..c.clone() };
    for c in &configs[1..] {
        c.validate()?;
        if strip(c) != strip(first) {
            return Err(HarnessError::Mismatch(format!("`{}` and `{}`", first.method.label(), c.method.label())));
        }
    }
    first.validate()?;
    let problem = Problem::build(first)?;
    let mut reports = Vec::new();
    for (i, c) in configs.iter().enumerate() {
        let sub = out.map(|d| d.join(format!("{i}-{}", c.method.name())));
        reports.push(run_on_problem(&problem, c, sub.as_deref())?);
    }
    let rows: Vec<ComparisonRow> = reports.iter().map(|r| r.row()).collect();
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("table.csv"), write_table(&rows))?;
    }
    Ok((rows, reports))
}

pub fn read_summary(path: &Path) -> Result<SummaryReport, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}
