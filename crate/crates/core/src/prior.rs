//! Product priors over the parameter vector.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// One independent marginal of a [`ProductPrior`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Marginal {
    /// N(mean, std^2).
    Normal { mean: f64, std: f64 },
    /// U(lo, hi).
    Uniform { lo: f64, hi: f64 },
    /// Degenerate prior concentrated at one value.
    PointMass { value: f64 },
}

impl Marginal {
    pub const STANDARD_NORMAL: Marginal = Marginal::Normal { mean: 0.0, std: 1.0 };

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Marginal::Normal { mean, std } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + std * z
            }
            Marginal::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Marginal::PointMass { value } => value,
        }
    }
}

/// Independent product of one-dimensional marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductPrior {
    marginals: Vec<Marginal>,
}

impl ProductPrior {
    pub fn new(marginals: Vec<Marginal>) -> Self {
        Self { marginals }
    }

    pub fn standard_normal(dim: usize) -> Self {
        Self::new(vec![Marginal::STANDARD_NORMAL; dim])
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.marginals.iter().map(|m| m.sample(rng)).collect()
    }

    pub fn sample_many<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..count).map(|_| self.sample(rng)).collect()
    }
}
