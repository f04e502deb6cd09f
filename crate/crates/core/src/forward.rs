//! The forward-model contract shared by the smoother, the surrogates and the
//! PDE models.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("input dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter outside the model domain: {0}")]
    Domain(String),
    #[error("forward solve failed: {0}")]
    Solver(String),
}

/// A map from parameters in R^d to predicted observations in R^m.
///
/// Implementations must be pure: the same input always produces the same
/// output and concurrent calls from several threads are allowed.
pub trait ForwardModel: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn evaluate(&self, theta: &[f64]) -> Result<Vec<f64>, ModelError>;
}

impl<M: ForwardModel + ?Sized> ForwardModel for &M {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
    fn evaluate(&self, theta: &[f64]) -> Result<Vec<f64>, ModelError> {
        (**self).evaluate(theta)
    }
}

impl<M: ForwardModel + ?Sized> ForwardModel for std::sync::Arc<M> {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
    fn evaluate(&self, theta: &[f64]) -> Result<Vec<f64>, ModelError> {
        (**self).evaluate(theta)
    }
}

/// Failure of one point inside a batch evaluation.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("evaluation of point {index} failed: {source}")]
pub struct BatchError {
    pub index: usize,
    #[source]
    pub source: ModelError,
}

/// Evaluates `model` at every point concurrently. Results keep input order and
/// the reported failure is always the lowest failing index.
pub fn evaluate_batch<M: ForwardModel + ?Sized>(
    model: &M,
    points: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, BatchError> {
    let results: Vec<Result<Vec<f64>, ModelError>> =
        points.par_iter().map(|p| model.evaluate(p)).collect();
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| r.map_err(|source| BatchError { index, source }))
        .collect()
}

/// Wraps a model and counts every call to `evaluate`.
pub struct CountingModel<M> {
    inner: M,
    calls: AtomicUsize,
}

impl<M> CountingModel<M> {
    pub fn new(inner: M) -> Self {
        Self { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }
}

impl<M: ForwardModel> ForwardModel for CountingModel<M> {
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }
    fn evaluate(&self, theta: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.evaluate(theta)
    }
}

/// Closure-backed model, handy for synthetic tests and user-defined maps.
pub struct FnModel<F> {
    input_dim: usize,
    output_dim: usize,
    f: F,
}

impl<F> FnModel<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    pub fn new(input_dim: usize, output_dim: usize, f: F) -> Self {
        Self { input_dim, output_dim, f }
    }
}

impl<F> ForwardModel for FnModel<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    fn input_dim(&self) -> usize {
        self.input_dim
    }
    fn output_dim(&self) -> usize {
        self.output_dim
    }
    fn evaluate(&self, theta: &[f64]) -> Result<Vec<f64>, ModelError> {
        if theta.len() != self.input_dim {
            return Err(ModelError::DimensionMismatch { expected: self.input_dim, got: theta.len() });
        }
        Ok((self.f)(theta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct FailsAbove(f64);
    impl ForwardModel for FailsAbove {
        fn input_dim(&self) -> usize {
            1
        }
        fn output_dim(&self) -> usize {
            1
        }
        fn evaluate(&self, theta: &[f64]) -> Result<Vec<f64>, ModelError> {
            if theta[0] > self.0 {
                Err(ModelError::Domain(format!("{} too large", theta[0])))
            } else {
                Ok(vec![2.0 * theta[0]])
            }
        }
    }

    #[test]
    fn batch_keeps_order_and_reports_first_failure() {
        let pts: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let ok = evaluate_batch(&FailsAbove(1e9), &pts).unwrap();
        assert!(ok.iter().enumerate().all(|(i, v)| v[0] == 2.0 * i as f64));
        let err = evaluate_batch(&FailsAbove(41.5), &pts).unwrap_err();
        assert_eq!(err.index, 42);
    }

    #[test]
    fn counting_model_counts() {
        let m = CountingModel::new(FnModel::new(1, 1, |t: &[f64]| vec![t[0]]));
        let pts: Vec<Vec<f64>> = (0..17).map(|i| vec![i as f64]).collect();
        evaluate_batch(&m, &pts).unwrap();
        m.evaluate(&[1.0]).unwrap();
        assert_eq!(m.calls(), 18);
        assert!(matches!(m.evaluate(&[1.0, 2.0]), Err(ModelError::DimensionMismatch { .. })));
    }
}
