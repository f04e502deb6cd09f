use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::EkiError;

/// Gaussian observation noise N(0, Gamma).
///
/// Gamma is factored as L L^T. `apply_sqrt` multiplies by L (so `L z` has
/// covariance Gamma) and `apply_inv_sqrt` by L^{-1}. The two norms used by the
/// smoother, ||Gamma^{-1/2} r|| and ||Gamma^{1/2} v||, only depend on the
/// quadratic forms r^T Gamma^{-1} r and v^T Gamma v, so the Cholesky factor
/// gives the same values as the symmetric square root.
#[derive(Debug, Clone)]
pub enum NoiseModel {
    /// Independent components with the given standard deviations.
    Diagonal { std: DVector<f64> },
    Dense { cov: DMatrix<f64>, chol: Cholesky<f64, Dyn> },
}

impl NoiseModel {
    /// sigma^2 I. A zero sigma is allowed for data perturbation but makes the
    /// whitened norms infinite.
    pub fn isotropic(dim: usize, sigma: f64) -> Self {
        Self::Diagonal { std: DVector::from_element(dim, sigma) }
    }

    pub fn diagonal(std: Vec<f64>) -> Self {
        Self::Diagonal { std: DVector::from_vec(std) }
    }

    pub fn dense(cov: DMatrix<f64>) -> Result<Self, EkiError> {
        if !cov.is_square() || (&cov - cov.transpose()).amax() > 1e-12 * cov.amax().max(1.0) {
            return Err(EkiError::NoiseNotSpd);
        }
        let chol = Cholesky::new(cov.clone()).ok_or(EkiError::NoiseNotSpd)?;
        Ok(Self::Dense { cov, chol })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Diagonal { std } => std.len(),
            Self::Dense { cov, .. } => cov.nrows(),
        }
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        match self {
            Self::Diagonal { std } => DMatrix::from_diagonal(&std.map(|s| s * s)),
            Self::Dense { cov, .. } => cov.clone(),
        }
    }

    /// L v.
    pub fn apply_sqrt(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Diagonal { std } => v.component_mul(std),
            Self::Dense { chol, .. } => chol.l() * v,
        }
    }

    /// L^{-1} v.
    pub fn apply_inv_sqrt(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Diagonal { std } => v.component_div(std),
            Self::Dense { chol, .. } => chol
                .l_dirty()
                .solve_lower_triangular(v)
                .expect("Cholesky factor has a positive diagonal"),
        }
    }

    /// ||Gamma^{-1/2} r||.
    pub fn whitened_norm(&self, r: &DVector<f64>) -> f64 {
        self.apply_inv_sqrt(r).norm()
    }

    /// ||Gamma^{1/2} v|| = sqrt(v^T Gamma v).
    pub fn sqrt_weighted_norm(&self, v: &DVector<f64>) -> f64 {
        match self {
            Self::Diagonal { std } => v.component_mul(std).norm(),
            Self::Dense { chol, .. } => (chol.l().transpose() * v).norm(),
        }
    }

    /// Adds `scale * Gamma` to `target` in place.
    pub fn add_scaled_to(&self, target: &mut DMatrix<f64>, scale: f64) {
        match self {
            Self::Diagonal { std } => {
                for (i, s) in std.iter().enumerate() {
                    target[(i, i)] += scale * s * s;
                }
            }
            Self::Dense { cov, .. } => *target += cov * scale,
        }
    }
}
