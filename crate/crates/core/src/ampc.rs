//! Adaptive multi-fidelity polynomial chaos driver for the ensemble Kalman
//! smoother.
//!
//! A degree-`N` expansion is fitted once on prior samples and replaces the
//! forward model inside the smoother. After every analysis step the true model
//! is evaluated at the new ensemble mean; when the relative sup-norm mismatch
//! exceeds `tol` the surrogate receives a degree-`N_C` correction fitted on
//! uniform samples from an infinity-norm ball around that mean.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eki::{EkiConfig, EkiError, EkiSession, IterationRecord, NoiseModel, RunTrace, StopReason};
use crate::forward::{evaluate_batch, BatchError, ForwardModel, ModelError};
use crate::multifidelity::{refine, MultiFidelityError, MultiFidelitySurrogate};
use crate::pce::{fit_weighted_lsq, BasisFamily, MultiIndexSet, PCSurrogate, PceError};
use crate::prior::ProductPrior;
use crate::rng::{stream_rng, streams};

#[derive(Debug, Clone, PartialEq)]
pub struct AmpcConfig {
    /// Degree N of the prior surrogate.
    pub degree: usize,
    /// Degree N_C of each local correction.
    pub correction_degree: usize,
    /// Refinement threshold on the error indicator; `f64::INFINITY` disables refinement.
    pub tol: f64,
    /// Infinity-norm radius of the refinement ball.
    pub radius: f64,
    /// Sample counts default to `oversampling * C(N + d, d)` and `oversampling * C(N_C + d, d)`.
    pub oversampling: usize,
    pub q1: Option<usize>,
    pub q2: Option<usize>,
    pub eki: EkiConfig,
}

impl Default for AmpcConfig {
    fn default() -> Self {
        Self {
            degree: 2,
            correction_degree: 2,
            tol: 1e-2,
            radius: 0.2,
            oversampling: 2,
            q1: None,
            q2: None,
            eki: EkiConfig::default(),
        }
    }
}

impl AmpcConfig {
    pub fn validate(&self) -> Result<(), AmpcErrorKind> {
        if !(self.tol > 0.0) {
            return Err(AmpcErrorKind::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.radius > 0.0) {
            return Err(AmpcErrorKind::Config(format!("radius must be positive, got {}", self.radius)));
        }
        if self.correction_degree > self.degree {
            return Err(AmpcErrorKind::Config(format!(
                "correction degree {} exceeds surrogate degree {}",
                self.correction_degree, self.degree
            )));
        }
        if self.oversampling == 0 {
            return Err(AmpcErrorKind::Config("oversampling must be at least 1".into()));
        }
        self.eki.validate().map_err(AmpcErrorKind::Eki)
    }

    pub fn q1(&self, dim: usize) -> Result<usize, PceError> {
        match self.q1 {
            Some(q) => Ok(q),
            None => Ok(self.oversampling * MultiIndexSet::cardinality(dim, self.degree)?),
        }
    }

    pub fn q2(&self, dim: usize) -> Result<usize, PceError> {
        match self.q2 {
            Some(q) => Ok(q),
            None => Ok(self.oversampling * MultiIndexSet::cardinality(dim, self.correction_degree)?),
        }
    }
}

/// High-fidelity evaluation counts of one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalBudgetLedger {
    pub offline: usize,
    pub online_indicator: usize,
    pub online_refinement: usize,
    /// Number of refinements J2.
    pub refinements: usize,
    /// Samples per refinement Q2.
    pub q2: usize,
}

impl EvalBudgetLedger {
    pub fn online(&self) -> usize {
        self.online_indicator + self.online_refinement
    }

    pub fn total(&self) -> usize {
        self.offline + self.online()
    }

    /// Checks offline = Q1 and online = J1 + J2 * Q2 with J2 <= J1.
    pub fn identity_holds(&self, q1: usize, j1: usize) -> bool {
        self.offline == q1
            && self.online() == j1 + self.refinements * self.q2
            && self.refinements <= j1
            && self.online_indicator == j1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementEvent {
    pub iteration: usize,
    pub center: Vec<f64>,
    pub radius: f64,
    pub samples: usize,
    pub err_before: f64,
    /// Indicator of the refined surrogate at the same center, reusing the
    /// high-fidelity value already computed.
    pub err_after: f64,
}

/// Value of the error indicator. `absolute` is set when `f(theta)` vanished
/// and the unnormalized sup-norm difference was reported instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Indicator {
    pub value: f64,
    pub absolute: bool,
}

/// Per-iteration adaptive data, aligned with the smoother trace records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmpcStep {
    pub indicator: Option<Indicator>,
    pub refined: bool,
    pub q2_spent: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AmpcErrorKind {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("prior has no orthonormal polynomial family; only N(0,1) and uniform marginals are supported")]
    UnsupportedPrior,
    #[error("surrogate fit failed: {0}")]
    Surrogate(#[from] PceError),
    #[error("high-fidelity evaluation failed: {0}")]
    HighFidelity(#[from] BatchError),
    #[error(transparent)]
    Eki(#[from] EkiError),
    #[error("refinement failed: {0}")]
    Refinement(#[from] MultiFidelityError),
}

/// A failed run together with the evaluations spent before the failure.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{kind} (after {} high-fidelity evaluations)", .ledger.total())]
pub struct AmpcError {
    pub kind: AmpcErrorKind,
    pub ledger: EvalBudgetLedger,
}

/// Fits the degree-`degree` prior surrogate on `q1` prior draws taken from
/// the `SURROGATE` stream of `seed`.
pub fn build_prior_surrogate<M: ForwardModel + ?Sized>(
    model: &M,
    prior: &ProductPrior,
    degree: usize,
    q1: usize,
    seed: u64,
) -> Result<PCSurrogate, AmpcErrorKind> {
    let basis = BasisFamily::for_marginals(prior.marginals()).ok_or(AmpcErrorKind::UnsupportedPrior)?;
    let set = MultiIndexSet::total_degree(prior.dim(), degree)?;
    let points = prior.sample_many(q1, &mut stream_rng(seed, streams::SURROGATE));
    let values = evaluate_batch(model, &points)?;
    let m = model.output_dim();
    let values = nalgebra::DMatrix::from_fn(q1, m, |i, k| values[i][k]);
    let (surrogate, _) = fit_weighted_lsq(&points, &values, &basis, &set)?;
    Ok(surrogate)
}

/// `||f(theta) - f_M(theta)||_inf / ||f(theta)||_inf` from precomputed values.
pub fn indicator_from_values(high: &[f64], surrogate: &[f64]) -> Indicator {
    let diff = high.iter().zip(surrogate).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = high.iter().map(|a| a.abs()).fold(0.0, f64::max);
    if scale > 0.0 {
        Indicator { value: diff / scale, absolute: false }
    } else {
        Indicator { value: diff, absolute: true }
    }
}

/// Evaluates the high-fidelity model once at `theta` and returns the
/// indicator together with `f(theta)`.
pub fn error_indicator<M, S>(model: &M, surrogate: &S, theta: &[f64]) -> Result<(Indicator, Vec<f64>), AmpcErrorKind>
where
    M: ForwardModel + ?Sized,
    S: ForwardModel + ?Sized,
{
    let high = model.evaluate(theta).map_err(|source| BatchError { index: 0, source })?;
    let low = surrogate.evaluate(theta).map_err(|source| BatchError { index: 0, source })?;
    Ok((indicator_from_values(&high, &low), high))
}

/// `count` i.i.d. uniform points of the infinity-norm ball of radius `radius`.
pub fn sample_ball<R: Rng + ?Sized>(center: &[f64], radius: f64, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| center.iter().map(|&c| c + radius * (2.0 * rng.random::<f64>() - 1.0)).collect())
        .collect()
}

#[derive(Debug, Clone)]
pub struct AmpcOutcome {
    pub mean: DVector<f64>,
    pub trace: RunTrace,
    /// One entry per trace record.
    pub steps: Vec<AmpcStep>,
    pub events: Vec<RefinementEvent>,
    pub ledger: EvalBudgetLedger,
    pub q1: usize,
    pub surrogate: MultiFidelitySurrogate,
    /// Wall time of the prior surrogate build.
    pub offline_seconds: f64,
}

pub const AMPC_CSV_HEADER: &str = "n,misfit,alpha,doublings,evals_cumulative,rel,seconds,err,refined,q2_spent";

impl AmpcOutcome {
    /// Smoother columns followed by `err,refined,q2_spent`.
    pub fn to_csv(&self, with_timing: bool) -> String {
        let mut out = String::new();
        writeln!(out, "{AMPC_CSV_HEADER}").unwrap();
        for (r, s) in self.trace.records.iter().zip(&self.steps) {
            let err = s.indicator.map(|i| i.value.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{}", r.csv_fields(with_timing), err, s.refined as u8, s.q2_spent).unwrap();
        }
        out
    }

    /// Number of indicator evaluations J1.
    pub fn j1(&self) -> usize {
        self.steps.iter().filter(|s| s.indicator.is_some()).count()
    }
}

type RelFn<'a> = Option<&'a (dyn Fn(&[f64]) -> f64 + Sync)>;

/// Runs the adaptive surrogate-driven smoother against the high-fidelity `model`.
pub fn run_ampc<M: ForwardModel + ?Sized>(
    model: &M,
    prior: &ProductPrior,
    y: &DVector<f64>,
    noise: &NoiseModel,
    config: &AmpcConfig,
    rel: RelFn<'_>,
) -> Result<AmpcOutcome, AmpcError> {
    let mut ledger = EvalBudgetLedger::default();
    let fail = |kind: AmpcErrorKind, ledger: &EvalBudgetLedger| AmpcError { kind, ledger: *ledger };
    config.validate().map_err(|k| fail(k, &ledger))?;
    let d = prior.dim();
    let q1 = config.q1(d).map_err(|e| fail(e.into(), &ledger))?;
    let q2 = config.q2(d).map_err(|e| fail(e.into(), &ledger))?;
    ledger.q2 = q2;

    let offline_start = Instant::now();
    let base = build_prior_surrogate(model, prior, config.degree, q1, config.eki.seed).map_err(|k| fail(k, &ledger))?;
    ledger.offline = q1;
    let offline_seconds = offline_start.elapsed().as_secs_f64();
    let mut surrogate = MultiFidelitySurrogate::from_base(base);

    let mut session = EkiSession::new(&config.eki, y, noise, prior).map_err(|e| fail(e.into(), &ledger))?;
    let mut records = Vec::new();
    let mut steps = Vec::new();
    let mut events = Vec::new();
    let mut stop = StopReason::MaxIterations;
    let mut analyses = 0;
    for n in 0..config.eki.max_iterations {
        let start = Instant::now();
        let mean = session.mean();
        let pred = session.predict(&surrogate).map_err(|e| fail(e.into(), &ledger))?;
        let rel_n = rel.map(|f| f(mean.as_slice()));
        let mut record = IterationRecord {
            n,
            misfit: pred.misfit,
            alpha: None,
            doublings: None,
            evals_cumulative: session.evaluations(),
            rel: rel_n,
            seconds: 0.0,
        };
        if pred.stop {
            record.seconds = start.elapsed().as_secs_f64();
            records.push(record);
            steps.push(AmpcStep { indicator: None, refined: false, q2_spent: 0 });
            stop = StopReason::Discrepancy;
            break;
        }
        let choice = session.analyze().map_err(|e| fail(e.into(), &ledger))?;
        analyses += 1;
        record.alpha = Some(choice.alpha);
        record.doublings = Some(choice.doublings);

        let center = session.mean();
        let (indicator, high) = error_indicator(model, &surrogate, center.as_slice()).map_err(|k| fail(k, &ledger))?;
        ledger.online_indicator += 1;
        let mut step = AmpcStep { indicator: Some(indicator), refined: false, q2_spent: 0 };
        if indicator.value > config.tol {
            let event_index = events.len() as u64;
            let mut rng = stream_rng(config.eki.seed, streams::REFINEMENT + event_index);
            let points = sample_ball(center.as_slice(), config.radius, q2, &mut rng);
            let refinement = refine(
                &surrogate,
                model,
                &points,
                config.correction_degree,
                Some(center.as_slice().to_vec()),
                Some(config.radius),
            )
            .map_err(|e| fail(e.into(), &ledger))?;
            ledger.online_refinement += refinement.evaluations;
            ledger.refinements += 1;
            surrogate = refinement.surrogate;
            let after = surrogate.eval(center.as_slice()).map_err(|e| fail(e.into(), &ledger))?;
            events.push(RefinementEvent {
                iteration: n,
                center: center.as_slice().to_vec(),
                radius: config.radius,
                samples: q2,
                err_before: indicator.value,
                err_after: indicator_from_values(&high, &after).value,
            });
            step.refined = true;
            step.q2_spent = q2;
        }
        record.seconds = start.elapsed().as_secs_f64();
        records.push(record);
        steps.push(step);
    }
    let mean = session.mean();
    let trace = RunTrace {
        records,
        stop,
        tau: config.eki.tau,
        eta: session.eta(),
        ensemble_size: config.eki.ensemble_size,
        forward_evaluations: session.evaluations(),
        analyses,
        final_rel: rel.map(|f| f(mean.as_slice())),
    };
    Ok(AmpcOutcome { mean, trace, steps, events, ledger, q1, surrogate, offline_seconds })
}

/// Smoother driven by the fixed prior surrogate, without any online
/// high-fidelity evaluations. Returns the outcome and Q1.
pub fn run_pc_eki<M: ForwardModel + ?Sized>(
    model: &M,
    prior: &ProductPrior,
    y: &DVector<f64>,
    noise: &NoiseModel,
    degree: usize,
    q1: Option<usize>,
    eki: &EkiConfig,
    rel: RelFn<'_>,
) -> Result<(crate::eki::EkiOutcome, usize), AmpcErrorKind> {
    let q1 = match q1 {
        Some(q) => q,
        None => 2 * MultiIndexSet::cardinality(prior.dim(), degree)?,
    };
    let surrogate = build_prior_surrogate(model, prior, degree, q1, eki.seed)?;
    let outcome = crate::eki::run_eki(&surrogate, eki, y, noise, prior, rel)?;
    Ok((outcome, q1))
}

impl From<ModelError> for AmpcErrorKind {
    fn from(source: ModelError) -> Self {
        AmpcErrorKind::HighFidelity(BatchError { index: 0, source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{CountingModel, FnModel};
    use crate::rng::stream_rng;

    #[test]
    fn indicator_arithmetic() {
        let i = indicator_from_values(&[2.0, 4.0], &[2.0, 3.0]);
        assert_eq!(i, Indicator { value: 0.25, absolute: false });
        let i = indicator_from_values(&[1.0, -3.0], &[1.0, -3.0]);
        assert_eq!(i.value, 0.0);
        let z = indicator_from_values(&[0.0, 0.0], &[0.5, -1.5]);
        assert_eq!(z, Indicator { value: 1.5, absolute: true });
    }

    #[test]
    fn indicator_costs_one_evaluation() {
        let model = CountingModel::new(FnModel::new(2, 2, |t: &[f64]| vec![t[0], t[1] + 1.0]));
        let sur = FnModel::new(2, 2, |t: &[f64]| vec![t[0], t[1]]);
        let (i, high) = error_indicator(&model, &sur, &[0.0, 1.0]).unwrap();
        assert_eq!(model.calls(), 1);
        assert_eq!(high, vec![0.0, 2.0]);
        assert_eq!(i.value, 0.5);
    }

    #[test]
    fn ball_samples_stay_in_box() {
        let c = [0.3, -1.0, 2.0];
        let pts = sample_ball(&c, 0.2, 10_000, &mut stream_rng(9, 0));
        for k in 0..3 {
            let lo = pts.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
            let hi = pts.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
            assert!(lo >= c[k] - 0.2 && hi <= c[k] + 0.2);
            assert!(lo < c[k] - 0.2 + 0.004 && hi > c[k] + 0.2 - 0.004);
        }
        let tiny = sample_ball(&c, 1e-300, 5, &mut stream_rng(9, 0));
        assert!(tiny.iter().all(|p| p == &c.to_vec()));
        assert_eq!(pts, sample_ball(&c, 0.2, 10_000, &mut stream_rng(9, 0)));
    }

    #[test]
    fn config_checks() {
        assert!(AmpcConfig { tol: 0.0, ..Default::default() }.validate().is_err());
        assert!(AmpcConfig { radius: -1.0, ..Default::default() }.validate().is_err());
        assert!(AmpcConfig { degree: 1, correction_degree: 2, ..Default::default() }.validate().is_err());
        let c = AmpcConfig::default();
        assert_eq!(c.q1(9).unwrap(), 110);
        assert_eq!(c.q2(9).unwrap(), 110);
        assert_eq!(AmpcConfig { degree: 1, correction_degree: 1, ..Default::default() }.q1(22).unwrap(), 46);
    }

    #[test]
    fn ledger_identity() {
        let l = EvalBudgetLedger { offline: 110, online_indicator: 30, online_refinement: 220, refinements: 2, q2: 110 };
        assert_eq!(l.online(), 250);
        assert!(l.identity_holds(110, 30));
        let l = EvalBudgetLedger { offline: 46, online_indicator: 19, online_refinement: 138, refinements: 3, q2: 46 };
        assert_eq!(l.online(), 157);
        assert!(l.identity_holds(46, 19));
    }
}
