//! Regularizing iterative ensemble Kalman smoother.
//!
//! Each iteration predicts the observations of every ensemble member, stops
//! once the mean misfit falls below `tau * eta` (discrepancy principle), and
//! otherwise moves every member with a Levenberg-Marquardt damped Kalman
//! update whose damping `alpha_n` is found by doubling from `alpha0`.

mod analysis;
mod ensemble;
mod noise;
mod run;
mod trace;

use thiserror::Error;

pub use analysis::{analysis_update, discrepancy_stop, misfit, select_alpha, AlphaChoice, Covariances};
pub use ensemble::{empirical_covariances, init_ensemble, perturb_data, Ensemble};
pub use noise::NoiseModel;
pub use run::{run_eki, EkiConfig, EkiOutcome, EkiSession, NoiseLevel, Prediction};
pub use trace::{IterationRecord, RunTrace, StopReason};

use crate::forward::BatchError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EkiError {
    #[error("ensemble needs at least 2 members, got {0}")]
    EnsembleTooSmall(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("noise covariance is not symmetric positive definite")]
    NoiseNotSpd,
    #[error("no admissible regularization parameter within {0} doublings")]
    RegularizationDiverged(usize),
    #[error("innovation covariance could not be factorized even after jitter")]
    Factorization,
    #[error("ensemble predictions have not been computed")]
    MissingPredictions,
    #[error("forward evaluation failed at iteration {iteration}, member {}: {}", .source.index, .source.source)]
    Model { iteration: usize, source: BatchError },
}
