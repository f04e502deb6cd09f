use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal, Uniform};

use super::config::{ExperimentConfig, FieldKind, NoiseLevelConfig, ProblemKind, TruthConfig};
use super::{rel_error, HarnessError};
use crate::eki::{NoiseLevel, NoiseModel};
use crate::forward::{ForwardModel, ModelError};
use crate::models::{
    generate_synthetic_data, kl_modes, ExponentialKernel, FieldParam, Grid2D, ObservationSpec, RadialBasisField,
    Source, SyntheticData, TfpdeConfig, TfpdeModel, Truncation,
};
use crate::prior::ProductPrior;
use crate::rng::{stream_rng, streams};

/// `f(theta) = A theta`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub operator: DMatrix<f64>,
}

impl ForwardModel for LinearModel {
    fn input_dim(&self) -> usize {
        self.operator.ncols()
    }
    fn output_dim(&self) -> usize {
        self.operator.nrows()
    }
    fn evaluate(&self, theta: &[f64]) -> Result<Vec<f64>, ModelError> {
        if theta.len() != self.input_dim() {
            return Err(ModelError::DimensionMismatch { expected: self.input_dim(), got: theta.len() });
        }
        Ok((&self.operator * DVector::from_column_slice(theta)).iter().copied().collect())
    }
}

#[derive(Debug, Clone)]
pub enum ProblemModel {
    Tfpde(Arc<TfpdeModel>),
    Linear(Arc<LinearModel>),
}

/// A forward model with its prior, truth and synthetic data.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: ProblemModel,
    pub prior: ProductPrior,
    pub truth: Vec<f64>,
    pub data: SyntheticData,
    pub noise: NoiseModel,
    pub noise_level: NoiseLevel,
    truth_field: Vec<f64>,
}

impl Problem {
    pub fn forward(&self) -> &dyn ForwardModel {
        match &self.model {
            ProblemModel::Tfpde(m) => m.as_ref(),
            ProblemModel::Linear(m) => m.as_ref(),
        }
    }

    pub fn y(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.data.y)
    }

    /// The quantity compared against the truth: the diffusivity on the
    /// solver grid, or the parameter itself for the linear problem.
    pub fn field(&self, theta: &[f64]) -> Result<Vec<f64>, HarnessError> {
        match &self.model {
            ProblemModel::Tfpde(m) => Ok(m.kappa(theta)?),
            ProblemModel::Linear(_) => Ok(theta.to_vec()),
        }
    }

    pub fn truth_field(&self) -> &[f64] {
        &self.truth_field
    }

    pub fn grid(&self) -> Option<Grid2D> {
        match &self.model {
            ProblemModel::Tfpde(m) => Some(m.config().grid),
            ProblemModel::Linear(_) => None,
        }
    }

    /// Relative field error of `theta`; NaN when the field cannot be formed.
    pub fn rel(&self, theta: &[f64]) -> f64 {
        self.field(theta).and_then(|f| rel_error(&f, &self.truth_field)).unwrap_or(f64::NAN)
    }

    pub fn build(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let p = &cfg.problem;
        let data_seed = cfg.run.data_seed();
        let sigma = cfg.noise.as_ref().map(|n| n.sigma).unwrap_or(match p.kind {
            ProblemKind::Example3 | ProblemKind::LinearGaussian => 0.01,
            _ => 1e-3,
        });
        let (model, dim) = match p.kind {
            ProblemKind::LinearGaussian => {
                let d = p.dim.unwrap_or(4);
                let m = p.outputs.unwrap_or(6);
                let mut rng = stream_rng(data_seed, streams::OPERATOR);
                let scale = 1.0 / (d as f64).sqrt();
                let a = DMatrix::from_fn(m, d, |_, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale * z
                });
                (ProblemModel::Linear(Arc::new(LinearModel { operator: a })), d)
            }
            _ => {
                let model = build_tfpde(cfg)?;
                let d = model.input_dim();
                (ProblemModel::Tfpde(Arc::new(model)), d)
            }
        };
        let prior = match &cfg.prior {
            Some(ms) => ProductPrior::new(ms.clone()),
            None => {
                if p.kind == ProblemKind::Custom && p.field == Some(FieldKind::Radial) {
                    return Err(HarnessError::Config("radial weights need an explicit prior".into()));
                }
                ProductPrior::standard_normal(dim)
            }
        };
        if prior.dim() != dim {
            return Err(HarnessError::Config(format!("prior has {} marginals, model has {dim} parameters", prior.dim())));
        }
        let truth_cfg = cfg.truth.clone().unwrap_or(match p.kind {
            ProblemKind::Example1 => TruthConfig::OutOfPriorUniform { lo: -4.0, hi: 4.0 },
            _ => TruthConfig::DrawFromPrior,
        });
        let mut rng = stream_rng(data_seed, streams::TRUTH);
        let truth = match truth_cfg {
            TruthConfig::DrawFromPrior => prior.sample(&mut rng),
            TruthConfig::Explicit { values } => {
                if values.len() != dim {
                    return Err(HarnessError::Config(format!("truth has {} values, model has {dim} parameters", values.len())));
                }
                values
            }
            TruthConfig::OutOfPriorUniform { lo, hi } => {
                let u = Uniform::new_inclusive(lo, hi).map_err(|e| HarnessError::Config(e.to_string()))?;
                (0..dim).map(|_| u.sample(&mut rng)).collect()
            }
        };
        let data = match &model {
            ProblemModel::Tfpde(m) => generate_synthetic_data(m, &truth, sigma, p.fine_factor, data_seed)?,
            ProblemModel::Linear(m) => {
                let clean = m.evaluate(&truth).map_err(|e| HarnessError::Config(e.to_string()))?;
                let mut rng = stream_rng(data_seed, streams::NOISE);
                let xi: Vec<f64> = (0..clean.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
                let y = clean.iter().zip(&xi).map(|(c, e)| c + sigma * e).collect();
                let eta = xi.iter().map(|e| e * e).sum::<f64>().sqrt();
                SyntheticData { y, clean, sigma, eta }
            }
        };
        let noise = NoiseModel::isotropic(data.y.len(), sigma);
        let noise_level = match cfg.eki.noise_level {
            NoiseLevelConfig::Realized => NoiseLevel::Known(data.eta),
            NoiseLevelConfig::Expected => NoiseLevel::Default,
        };
        let mut problem = Problem { model, prior, truth, data, noise, noise_level, truth_field: Vec::new() };
        problem.truth_field = problem.field(&problem.truth)?;
        Ok(problem)
    }
}

fn build_tfpde(cfg: &ExperimentConfig) -> Result<TfpdeModel, HarnessError> {
    let p = &cfg.problem;
    let grid = Grid2D::square(p.grid)?;
    let tf = TfpdeConfig {
        alpha: p.order,
        dt: p.dt,
        t_final: p.t_final,
        grid,
        source: Source::default(),
        initial: None,
    };
    let field_kind = match p.kind {
        ProblemKind::Example1 | ProblemKind::Example2 => FieldKind::RadialLog,
        ProblemKind::Example3 => FieldKind::Kl,
        _ => p.field.expect("validated"),
    };
    let field = match field_kind {
        FieldKind::RadialLog => FieldParam::RadialLog(RadialBasisField::default()),
        FieldKind::Radial => FieldParam::RadialWeights(RadialBasisField::default()),
        FieldKind::Kl => {
            let truncation = match (p.modes, p.energy) {
                (_, Some(e)) => Truncation::Energy(e),
                (Some(d), None) => Truncation::Modes(d),
                (None, None) => Truncation::Modes(22),
            };
            let kl_grid = Grid2D::square(p.kl_grid.unwrap_or(p.grid))?;
            FieldParam::Kl(Arc::new(kl_modes(ExponentialKernel::default(), kl_grid, truncation)?))
        }
    };
    let obs = cfg.observation.clone();
    let times = obs.as_ref().map(|o| o.times.clone()).unwrap_or_else(|| vec![0.25, 0.75, 1.0]);
    let spec = match obs.as_ref().and_then(|o| o.locations.clone()) {
        Some(locations) => ObservationSpec { locations, times },
        None => {
            let n = obs.as_ref().and_then(|o| o.sensors).unwrap_or(match p.kind {
                ProblemKind::Example3 => 11,
                _ => 5,
            });
            ObservationSpec::uniform_grid(n, times)
        }
    };
    Ok(TfpdeModel::new(tf, field, spec)?)
}
