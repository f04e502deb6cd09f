//! Forward models: time-fractional diffusion on the unit square with
//! parameterized diffusivity fields, point observations and synthetic data.

mod banded;
mod grid;
mod kl;
mod observe;
mod radial;
mod tfpde;

use std::sync::Arc;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

pub use banded::{BandCholesky, SymBand};
pub use grid::{write_snapshot, Grid2D};
pub use kl::{kl_modes, ExponentialKernel, KlModes, Truncation};
pub use observe::{observe, ObservationSpec};
pub use radial::RadialBasisField;
pub use tfpde::{assemble, caputo_l1_scale, caputo_l1_weights, solve_tfpde, steps_to, Source, TfpdeConfig, Trajectory};

use crate::forward::{ForwardModel, ModelError};
use crate::rng::{stream_rng, streams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelsError {
    #[error("fractional order must lie in (0, 1), got {0}")]
    Alpha(f64),
    #[error("diffusivity must be positive and finite, got {value} at node {node}")]
    NonPositiveKappa { node: usize, value: f64 },
    #[error("linear solve failed: {0}")]
    Solver(String),
    #[error("time {time} is not a multiple of the step {dt}")]
    TimeMisaligned { time: f64, dt: f64 },
    #[error("sensor ({x}, {y}) lies outside the unit square")]
    SensorOutside { x: f64, y: f64 },
    #[error("kernel matrix is indefinite (eigenvalue {0})")]
    Indefinite(f64),
    #[error("expected {expected} parameters, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("{0}")]
    Config(String),
}

impl From<ModelsError> for ModelError {
    fn from(e: ModelsError) -> Self {
        match e {
            ModelsError::Dimension { expected, got } => ModelError::DimensionMismatch { expected, got },
            ModelsError::Solver(_) | ModelsError::Indefinite(_) => ModelError::Solver(e.to_string()),
            other => ModelError::Domain(other.to_string()),
        }
    }
}

/// Map from a parameter vector to a diffusivity field.
#[derive(Debug, Clone)]
pub enum FieldParam {
    /// kappa = sum_i theta_i g_i with positive weights.
    RadialWeights(RadialBasisField),
    /// kappa = sum_i exp(xi_i) g_i.
    RadialLog(RadialBasisField),
    /// log kappa = sum_i theta_i sqrt(lambda_i) phi_i.
    Kl(Arc<KlModes>),
}

impl FieldParam {
    pub fn dim(&self) -> usize {
        match self {
            FieldParam::RadialWeights(f) | FieldParam::RadialLog(f) => f.dim(),
            FieldParam::Kl(m) => m.len(),
        }
    }

    /// Per-node features; kappa (or log kappa for KL) is linear in them.
    pub fn features(&self, grid: &Grid2D) -> DMatrix<f64> {
        match self {
            FieldParam::RadialWeights(f) | FieldParam::RadialLog(f) => {
                let pts = grid.points();
                DMatrix::from_fn(pts.len(), f.dim(), |p, i| f.features(pts[p])[i])
            }
            FieldParam::Kl(m) => m.scaled_features(grid),
        }
    }

    fn kappa_from_features(&self, features: &DMatrix<f64>, theta: &[f64]) -> Result<Vec<f64>, ModelsError> {
        if theta.len() != self.dim() {
            return Err(ModelsError::Dimension { expected: self.dim(), got: theta.len() });
        }
        let coef: Vec<f64> = match self {
            FieldParam::RadialWeights(_) => {
                if let Some((node, &value)) = theta.iter().enumerate().find(|(_, &t)| !(t > 0.0)) {
                    return Err(ModelsError::Config(format!("radial weight {node} must be positive, got {value}")));
                }
                theta.to_vec()
            }
            FieldParam::RadialLog(_) => theta.iter().map(|x| x.exp()).collect(),
            FieldParam::Kl(_) => theta.to_vec(),
        };
        let lin = features * nalgebra::DVector::from_vec(coef);
        Ok(match self {
            FieldParam::Kl(_) => lin.iter().map(|v| v.exp()).collect(),
            _ => lin.iter().copied().collect(),
        })
    }

    /// Field values at the nodes of `grid`.
    pub fn kappa_on(&self, grid: &Grid2D, theta: &[f64]) -> Result<Vec<f64>, ModelsError> {
        self.kappa_from_features(&self.features(grid), theta)
    }
}

/// Parameter-to-observable map of the time-fractional diffusion problem.
#[derive(Debug, Clone)]
pub struct TfpdeModel {
    config: TfpdeConfig,
    field: FieldParam,
    observation: ObservationSpec,
    features: DMatrix<f64>,
}

impl TfpdeModel {
    pub fn new(config: TfpdeConfig, field: FieldParam, observation: ObservationSpec) -> Result<Self, ModelsError> {
        config.validate()?;
        let steps = config.steps()?;
        for &t in &observation.times {
            if steps_to(t, config.dt)? > steps {
                return Err(ModelsError::Config(format!("observation time {t} exceeds the final time {}", config.t_final)));
            }
        }
        if let Some(x) = observation.locations.iter().find(|x| !(0.0..=1.0).contains(&x[0]) || !(0.0..=1.0).contains(&x[1])) {
            return Err(ModelsError::SensorOutside { x: x[0], y: x[1] });
        }
        let features = field.features(&config.grid);
        Ok(Self { config, field, observation, features })
    }

    pub fn config(&self) -> &TfpdeConfig {
        &self.config
    }

    pub fn field(&self) -> &FieldParam {
        &self.field
    }

    pub fn observation(&self) -> &ObservationSpec {
        &self.observation
    }

    pub fn kappa(&self, theta: &[f64]) -> Result<Vec<f64>, ModelsError> {
        self.field.kappa_from_features(&self.features, theta)
    }

    pub fn solve(&self, theta: &[f64]) -> Result<Trajectory, ModelsError> {
        solve_tfpde(&self.kappa(theta)?, &self.config)
    }

    /// The same model on a grid and time step refined by `factor`.
    pub fn refined(&self, factor: usize) -> Result<Self, ModelsError> {
        Self::new(self.config.refined(factor), self.field.clone(), self.observation.clone())
    }
}

impl ForwardModel for TfpdeModel {
    fn input_dim(&self) -> usize {
        self.field.dim()
    }

    fn output_dim(&self) -> usize {
        self.observation.len()
    }

    fn evaluate(&self, theta: &[f64]) -> Result<Vec<f64>, ModelError> {
        Ok(observe(&self.solve(theta)?, &self.observation)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub y: Vec<f64>,
    /// Noise-free observations from the refined solver.
    pub clean: Vec<f64>,
    pub sigma: f64,
    /// Realized noise level ||(y - clean) / sigma||.
    pub eta: f64,
}

/// Observations of `truth` from `model` refined by `fine_factor` in space and
/// time, plus i.i.d. N(0, sigma^2) noise drawn from the `NOISE` stream.
pub fn generate_synthetic_data(
    model: &TfpdeModel,
    truth: &[f64],
    sigma: f64,
    fine_factor: usize,
    seed: u64,
) -> Result<SyntheticData, ModelsError> {
    if fine_factor < 1 {
        return Err(ModelsError::Config("fine_factor must be at least 1".into()));
    }
    if !(sigma >= 0.0) {
        return Err(ModelsError::Config(format!("noise level must be non-negative, got {sigma}")));
    }
    let fine = model.refined(fine_factor)?;
    let clean = observe(&fine.solve(truth)?, fine.observation())?;
    let mut rng = stream_rng(seed, streams::NOISE);
    let xi: Vec<f64> = (0..clean.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let y = clean.iter().zip(&xi).map(|(c, e)| c + sigma * e).collect();
    let eta = if sigma > 0.0 { xi.iter().map(|e| e * e).sum::<f64>().sqrt() } else { 0.0 };
    Ok(SyntheticData { y, clean, sigma, eta })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_model() -> TfpdeModel {
        let cfg = TfpdeConfig { grid: Grid2D::square(11).unwrap(), dt: 0.05, ..Default::default() };
        TfpdeModel::new(cfg, FieldParam::RadialLog(RadialBasisField::default()), ObservationSpec::uniform_grid(3, vec![0.5, 1.0]))
            .unwrap()
    }

    #[test]
    fn model_shapes_and_errors() {
        let m = small_model();
        assert_eq!((m.input_dim(), m.output_dim()), (9, 18));
        assert!(matches!(m.evaluate(&[0.0; 4]), Err(ModelError::DimensionMismatch { expected: 9, got: 4 })));
        let y = m.evaluate(&[0.0; 9]).unwrap();
        assert!(y.iter().all(|v| v.is_finite()) && y.iter().any(|&v| v > 0.0));
        let bad = TfpdeModel::new(
            TfpdeConfig { dt: 0.02, ..m.config().clone() },
            m.field().clone(),
            ObservationSpec::uniform_grid(3, vec![0.25]),
        );
        assert!(matches!(bad, Err(ModelsError::TimeMisaligned { .. })));
    }

    #[test]
    fn noiseless_data_is_exact() {
        let m = small_model();
        let d = generate_synthetic_data(&m, &[0.1; 9], 0.0, 2, 5).unwrap();
        assert_eq!(d.eta, 0.0);
        assert_eq!(d.y, d.clean);
        let fine = m.refined(2).unwrap();
        assert_eq!(d.clean, fine.evaluate(&[0.1; 9]).unwrap());
    }

    #[test]
    fn radial_weights_require_positivity() {
        let f = FieldParam::RadialWeights(RadialBasisField::default());
        let g = Grid2D::square(4).unwrap();
        assert!(f.kappa_on(&g, &[1.0; 9]).unwrap().iter().all(|&k| k > 0.0));
        let mut w = [1.0; 9];
        w[3] = -0.1;
        assert!(f.kappa_on(&g, &w).is_err());
    }
}
