//! Polynomial chaos expansions over product priors.
//!
//! Expansions are indexed by the total-degree set of all multi-indices with
//! component sum at most `N`, ordered graded-lexicographically. Because the
//! ordering is graded, the set of degree `N_C <= N` is always a prefix of the
//! set of degree `N`; [`crate::multifidelity`] relies on this when it merges
//! coefficient tables.

mod basis;
mod fit;
mod index;
pub mod io;

use thiserror::Error;

pub use basis::{BasisFamily, Univariate};
pub use fit::{christoffel_weights, fit_lsq_with_weights, fit_weighted_lsq, DesignMatrix, FitReport, PCSurrogate};
pub use index::{binomial, MultiIndex, MultiIndexSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PceError {
    #[error("total-degree set for d={dim}, N={degree} is too large to represent")]
    SizeOverflow { dim: usize, degree: usize },
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coordinate {coord} = {value} lies outside the Legendre interval [{lo}, {hi}]")]
    OutsideSupport { coord: usize, value: f64, lo: f64, hi: f64 },
    #[error("undersampled fit: {samples} samples for {terms} basis terms")]
    Undersampled { samples: usize, terms: usize },
    #[error("value table has {rows} rows but there are {samples} sample points")]
    ValueRowMismatch { rows: usize, samples: usize },
    #[error("rank-deficient design: column {column} ({index}) is numerically dependent on earlier columns")]
    RankDeficient { column: usize, index: String },
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("invalid surrogate record: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for PceError {
    fn from(e: std::io::Error) -> Self {
        PceError::Io(e.to_string())
    }
}
