//! Experiment orchestration: declarative configs, repeated runs of the
//! Direct / PC / AMPC variants, summary statistics and reporting.

mod config;
mod experiment;
mod problem;

use thiserror::Error;

pub use config::{
    EkiSection, ExperimentConfig, FieldKind, MethodConfig, NoiseConfig, NoiseLevelConfig, ObservationConfig, ProblemConfig,
    ProblemKind, RunSection, TruthConfig,
};
pub use experiment::{
    compare_methods, read_summary, run_experiment, run_repeat, write_table, ComparisonRow, RunResult, SummaryReport,
};
pub use problem::{LinearModel, Problem, ProblemModel};

use crate::eki::NoiseModel;
use crate::forward::ForwardModel;
use crate::models::ModelsError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("problem setup failed: {0}")]
    Model(#[from] ModelsError),
    #[error("reference field has zero norm")]
    ZeroTruth,
    #[error("configs differ in more than the method: {0}")]
    Mismatch(String),
    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

/// `||estimate - truth|| / ||truth||` over all nodes.
pub fn rel_error(estimate: &[f64], truth: &[f64]) -> Result<f64, HarnessError> {
    if estimate.len() != truth.len() {
        return Err(HarnessError::Config(format!("field lengths differ: {} vs {}", estimate.len(), truth.len())));
    }
    let den: f64 = truth.iter().map(|t| t * t).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(HarnessError::ZeroTruth);
    }
    let num: f64 = estimate.iter().zip(truth).map(|(e, t)| (e - t) * (e - t)).sum::<f64>().sqrt();
    Ok(num / den)
}

/// Unsquared data misfit `||Gamma^{-1/2} (y - f(theta))||`.
pub fn potential<M: ForwardModel + ?Sized>(
    theta: &[f64],
    y: &[f64],
    noise: &NoiseModel,
    model: &M,
) -> Result<f64, crate::forward::ModelError> {
    let f = model.evaluate(theta)?;
    let r = nalgebra::DVector::from_iterator(y.len(), y.iter().zip(&f).map(|(a, b)| a - b));
    Ok(noise.whitened_norm(&r))
}

/// Nearest-rank quantile: the smallest sample with at least `p` of the
/// samples at or below it.
pub fn nearest_rank(values: &[f64], p: f64) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let rank = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Some(v[rank - 1])
}

/// Mean with 20% and 80% nearest-rank quantiles.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub q20: f64,
    pub q80: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        let finite: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
        if finite.is_empty() {
            return None;
        }
        Some(Self {
            mean: finite.iter().sum::<f64>() / finite.len() as f64,
            q20: nearest_rank(&finite, 0.2)?,
            q80: nearest_rank(&finite, 0.8)?,
        })
    }
}
