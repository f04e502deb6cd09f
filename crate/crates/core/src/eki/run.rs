use std::time::Instant;

use nalgebra::DVector;

use super::{
    analysis_update, init_ensemble, misfit, perturb_data, select_alpha, AlphaChoice, Covariances, EkiError, Ensemble,
    IterationRecord, NoiseModel, RunTrace, StopReason,
};
use crate::forward::{evaluate_batch, ForwardModel};
use crate::prior::ProductPrior;
use crate::rng::{stream_rng, streams};

/// Noise level eta used by the discrepancy principle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLevel {
    Known(f64),
    /// sqrt(m), the typical size of ||Gamma^{-1/2} xi|| for Gaussian noise.
    Default,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EkiConfig {
    pub ensemble_size: usize,
    pub rho: f64,
    pub tau: f64,
    pub max_iterations: usize,
    pub alpha0: f64,
    pub noise_level: NoiseLevel,
    pub seed: u64,
}

impl Default for EkiConfig {
    fn default() -> Self {
        Self {
            ensemble_size: 100,
            rho: 0.7,
            tau: 1.0 / 0.7,
            max_iterations: 30,
            alpha0: 1.0,
            noise_level: NoiseLevel::Default,
            seed: 0,
        }
    }
}

impl EkiConfig {
    pub fn validate(&self) -> Result<(), EkiError> {
        if self.ensemble_size < 2 {
            return Err(EkiError::EnsembleTooSmall(self.ensemble_size));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(EkiError::Config(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        // tau >= 1/rho, tolerant of the rounding in tau = 1.0 / rho
        if !(self.tau * self.rho >= 1.0 - 1e-12) {
            return Err(EkiError::Config(format!("tau must be at least 1/rho, got tau={} rho={}", self.tau, self.rho)));
        }
        if !(self.alpha0 > 0.0) {
            return Err(EkiError::Config(format!("alpha0 must be positive, got {}", self.alpha0)));
        }
        if let NoiseLevel::Known(eta) = self.noise_level {
            if !(eta >= 0.0) {
                return Err(EkiError::Config(format!("noise level must be non-negative, got {eta}")));
            }
        }
        Ok(())
    }

    pub fn eta(&self, m: usize) -> f64 {
        match self.noise_level {
            NoiseLevel::Known(eta) => eta,
            NoiseLevel::Default => (m as f64).sqrt(),
        }
    }
}

/// Result of one prediction step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub misfit: f64,
    pub stop: bool,
}

/// Smoother state between iterations, driven step by step.
///
/// [`run_eki`] and the adaptive driver in [`crate::ampc`] both run on top of
/// this type, so a surrogate-driven run performs exactly the same arithmetic
/// as a plain run with the same evaluator.
pub struct EkiSession<'a> {
    config: &'a EkiConfig,
    noise: &'a NoiseModel,
    y: DVector<f64>,
    perturbed: nalgebra::DMatrix<f64>,
    ensemble: Ensemble,
    eta: f64,
    evaluations: usize,
}

impl<'a> EkiSession<'a> {
    /// Draws the prior ensemble and the perturbed data from the config seed.
    pub fn new(config: &'a EkiConfig, y: &DVector<f64>, noise: &'a NoiseModel, prior: &ProductPrior) -> Result<Self, EkiError> {
        config.validate()?;
        if noise.dim() != y.len() {
            return Err(EkiError::Dimension { what: "noise model", expected: y.len(), got: noise.dim() });
        }
        let ensemble = init_ensemble(prior, config.ensemble_size, &mut stream_rng(config.seed, streams::ENSEMBLE))?;
        let perturbed = perturb_data(y, noise, config.ensemble_size, &mut stream_rng(config.seed, streams::PERTURBATION))?;
        Ok(Self { config, noise, y: y.clone(), perturbed, ensemble, eta: config.eta(y.len()), evaluations: 0 })
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    pub fn mean(&self) -> DVector<f64> {
        self.ensemble.mean()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    /// Evaluates every member and applies the discrepancy principle to the
    /// mean prediction.
    pub fn predict<M: ForwardModel + ?Sized>(&mut self, model: &M) -> Result<Prediction, EkiError> {
        if model.input_dim() != self.ensemble.dim() {
            return Err(EkiError::Dimension { what: "model input", expected: self.ensemble.dim(), got: model.input_dim() });
        }
        if model.output_dim() != self.y.len() {
            return Err(EkiError::Dimension { what: "model output", expected: self.y.len(), got: model.output_dim() });
        }
        let outputs = evaluate_batch(model, &self.ensemble.member_points())
            .map_err(|source| EkiError::Model { iteration: self.ensemble.iteration, source })?;
        self.evaluations += outputs.len();
        let preds = nalgebra::DMatrix::from_fn(self.y.len(), outputs.len(), |i, j| outputs[j][i]);
        self.ensemble.predictions = Some(preds);
        let omega_bar = self.ensemble.prediction_mean().expect("just set");
        let misfit = misfit(&omega_bar, &self.y, self.noise);
        Ok(Prediction { misfit, stop: misfit <= self.config.tau * self.eta })
    }

    /// Chooses alpha_n and moves every member. Requires a preceding prediction.
    pub fn analyze(&mut self) -> Result<AlphaChoice, EkiError> {
        let covs = Covariances::of(&self.ensemble)?;
        let omega_bar = self.ensemble.prediction_mean().ok_or(EkiError::MissingPredictions)?;
        let residual = &self.y - omega_bar;
        let choice = select_alpha(&covs.predicted, self.noise, &residual, self.config.rho, self.config.alpha0)?;
        let members = analysis_update(&self.ensemble, &covs, &self.perturbed, choice.alpha, self.noise)?;
        self.ensemble.members = members;
        self.ensemble.predictions = None;
        self.ensemble.iteration += 1;
        Ok(choice)
    }
}

#[derive(Debug, Clone)]
pub struct EkiOutcome {
    pub mean: DVector<f64>,
    pub trace: RunTrace,
    pub ensemble: Ensemble,
}

/// Runs the smoother until the discrepancy principle holds or
/// `max_iterations` analysis steps have been taken. `rel` maps a parameter
/// vector to its relative error against the truth, when known.
pub fn run_eki<M: ForwardModel + ?Sized>(
    model: &M,
    config: &EkiConfig,
    y: &DVector<f64>,
    noise: &NoiseModel,
    prior: &ProductPrior,
    rel: Option<&(dyn Fn(&[f64]) -> f64 + Sync)>,
) -> Result<EkiOutcome, EkiError> {
    let mut session = EkiSession::new(config, y, noise, prior)?;
    let mut records = Vec::new();
    let mut stop = StopReason::MaxIterations;
    let mut analyses = 0;
    for n in 0..config.max_iterations {
        let start = Instant::now();
        let mean = session.mean();
        let pred = session.predict(model)?;
        let rel_n = rel.map(|f| f(mean.as_slice()));
        if pred.stop {
            records.push(IterationRecord {
                n,
                misfit: pred.misfit,
                alpha: None,
                doublings: None,
                evals_cumulative: session.evaluations(),
                rel: rel_n,
                seconds: start.elapsed().as_secs_f64(),
            });
            stop = StopReason::Discrepancy;
            break;
        }
        let choice = session.analyze()?;
        analyses += 1;
        records.push(IterationRecord {
            n,
            misfit: pred.misfit,
            alpha: Some(choice.alpha),
            doublings: Some(choice.doublings),
            evals_cumulative: session.evaluations(),
            rel: rel_n,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    let mean = session.mean();
    let trace = RunTrace {
        records,
        stop,
        tau: config.tau,
        eta: session.eta(),
        ensemble_size: config.ensemble_size,
        forward_evaluations: session.evaluations(),
        analyses,
        final_rel: rel.map(|f| f(mean.as_slice())),
    };
    Ok(EkiOutcome { mean, trace, ensemble: session.ensemble().clone() })
}
