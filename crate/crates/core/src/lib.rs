//! Derivative-free Bayesian parameter estimation with the regularizing
//! iterative ensemble Kalman smoother, optionally accelerated by an adaptively
//! refined multi-fidelity polynomial chaos surrogate.
//!
//! The crate is organised bottom-up:
//!
//! * [`pce`]: total-degree multi-index sets, orthonormal Hermite/Legendre
//!   bases and weighted least-squares fitting.
//! * [`multifidelity`]: additive correction of a low-fidelity expansion by
//!   high-fidelity evaluations.
//! * [`eki`]: the ensemble Kalman smoother with discrepancy-principle stopping.
//! * [`ampc`]: the adaptive multi-fidelity driver that swaps the forward model
//!   for a surrogate and refines it locally around the ensemble mean.
//! * [`models`]: the time-fractional diffusion forward model, permeability
//!   parameterisations and observation operators.
//! * [`harness`]: declarative experiment configs, repeated runs and reporting.

pub mod ampc;
pub mod eki;
pub mod forward;
pub mod harness;
pub mod models;
pub mod multifidelity;
pub mod pce;
pub mod prior;
pub mod rng;

pub use forward::{ForwardModel, ModelError};
pub use prior::{Marginal, ProductPrior};
