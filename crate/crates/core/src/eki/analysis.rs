use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{empirical_covariances, EkiError, Ensemble, NoiseModel};

/// Maximum number of doublings tried by [`select_alpha`].
pub const MAX_DOUBLINGS: usize = 60;

/// Cross and prediction covariances of one ensemble.
#[derive(Debug, Clone)]
pub struct Covariances {
    pub cross: DMatrix<f64>,
    pub predicted: DMatrix<f64>,
}

impl Covariances {
    pub fn of(ensemble: &Ensemble) -> Result<Self, EkiError> {
        let preds = ensemble.predictions.as_ref().ok_or(EkiError::MissingPredictions)?;
        let (cross, predicted) = empirical_covariances(&ensemble.members, preds)?;
        Ok(Self { cross, predicted })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaChoice {
    pub alpha: f64,
    pub doublings: usize,
}

/// Cholesky of C^{ww} + alpha Gamma, retrying once with a trace-scaled jitter.
fn factor_innovation(cww: &DMatrix<f64>, noise: &NoiseModel, alpha: f64) -> Result<Cholesky<f64, Dyn>, EkiError> {
    let mut s = cww.clone();
    noise.add_scaled_to(&mut s, alpha);
    if let Some(c) = Cholesky::new(s.clone()) {
        return Ok(c);
    }
    let m = s.nrows();
    let jitter = 1e-12 * s.trace() / m as f64;
    for i in 0..m {
        s[(i, i)] += jitter;
    }
    Cholesky::new(s).ok_or(EkiError::Factorization)
}

/// First alpha in alpha0, 2 alpha0, 4 alpha0, ... with
/// alpha ||Gamma^{1/2} (C^{ww} + alpha Gamma)^{-1} r|| >= rho ||Gamma^{-1/2} r||.
pub fn select_alpha(
    cww: &DMatrix<f64>,
    noise: &NoiseModel,
    residual: &DVector<f64>,
    rho: f64,
    alpha0: f64,
) -> Result<AlphaChoice, EkiError> {
    if !(alpha0 > 0.0) {
        return Err(EkiError::Config(format!("alpha0 must be positive, got {alpha0}")));
    }
    let target = rho * noise.whitened_norm(residual);
    let mut alpha = alpha0;
    for doublings in 0..=MAX_DOUBLINGS {
        let chol = factor_innovation(cww, noise, alpha)?;
        let x = chol.solve(residual);
        if alpha * noise.sqrt_weighted_norm(&x) >= target {
            return Ok(AlphaChoice { alpha, doublings });
        }
        alpha *= 2.0;
    }
    Err(EkiError::RegularizationDiverged(MAX_DOUBLINGS))
}

/// theta_j += C^{tw} (C^{ww} + alpha Gamma)^{-1} (y_j - omega_j) for every member.
/// Returns the updated member table; the ensemble itself is not modified.
pub fn analysis_update(
    ensemble: &Ensemble,
    covs: &Covariances,
    perturbed: &DMatrix<f64>,
    alpha: f64,
    noise: &NoiseModel,
) -> Result<DMatrix<f64>, EkiError> {
    let preds = ensemble.predictions.as_ref().ok_or(EkiError::MissingPredictions)?;
    if perturbed.shape() != preds.shape() {
        return Err(EkiError::Dimension { what: "perturbed data columns", expected: preds.ncols(), got: perturbed.ncols() });
    }
    if !(alpha > 0.0) {
        return Err(EkiError::Config(format!("alpha must be positive, got {alpha}")));
    }
    let chol = factor_innovation(&covs.predicted, noise, alpha)?;
    let innovations = perturbed - preds;
    let gain_input = chol.solve(&innovations);
    Ok(&ensemble.members + &covs.cross * gain_input)
}

/// ||Gamma^{-1/2} (y - omega_bar)||.
pub fn misfit(omega_bar: &DVector<f64>, y: &DVector<f64>, noise: &NoiseModel) -> f64 {
    noise.whitened_norm(&(y - omega_bar))
}

pub fn discrepancy_stop(omega_bar: &DVector<f64>, y: &DVector<f64>, noise: &NoiseModel, tau: f64, eta: f64) -> bool {
    misfit(omega_bar, y, noise) <= tau * eta
}
