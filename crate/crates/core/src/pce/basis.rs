use serde::{Deserialize, Serialize};

use super::{MultiIndexSet, PceError};
use crate::prior::Marginal;

/// Univariate orthonormal family for one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Univariate {
    /// Probabilists' Hermite polynomials, orthonormal under N(0, 1).
    Hermite,
    /// Legendre polynomials mapped to `[lo, hi]`, orthonormal under U(lo, hi).
    Legendre { lo: f64, hi: f64 },
}

impl Univariate {
    /// Writes psi_0(x), ..., psi_n(x) into `out` (length n+1).
    ///
    /// Both recurrences run directly on the normalised polynomials so the
    /// values stay O(1)-scaled at high degree.
    pub fn eval_all(&self, coord: usize, x: f64, out: &mut [f64]) -> Result<(), PceError> {
        let n = out.len();
        if n == 0 {
            return Ok(());
        }
        out[0] = 1.0;
        match *self {
            Univariate::Hermite => {
                if n > 1 {
                    out[1] = x;
                }
                for k in 1..n - 1 {
                    let kf = k as f64;
                    out[k + 1] = (x * out[k] - kf.sqrt() * out[k - 1]) / (kf + 1.0).sqrt();
                }
            }
            Univariate::Legendre { lo, hi } => {
                if !(lo..=hi).contains(&x) {
                    return Err(PceError::OutsideSupport { coord, value: x, lo, hi });
                }
                let t = (2.0 * x - lo - hi) / (hi - lo);
                if n > 1 {
                    out[1] = 3f64.sqrt() * t;
                }
                for k in 1..n - 1 {
                    let kf = k as f64;
                    let a = ((2.0 * kf + 3.0) * (2.0 * kf + 1.0)).sqrt() / (kf + 1.0);
                    let b = kf / (kf + 1.0) * ((2.0 * kf + 3.0) / (2.0 * kf - 1.0)).sqrt();
                    out[k + 1] = a * t * out[k] - b * out[k - 1];
                }
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match *self {
            Univariate::Hermite => "hermite".to_string(),
            Univariate::Legendre { lo, hi } => format!("legendre:{lo:e}:{hi:e}"),
        }
    }

    pub fn parse_label(s: &str) -> Option<Self> {
        if s == "hermite" {
            return Some(Univariate::Hermite);
        }
        let rest = s.strip_prefix("legendre:")?;
        let (lo, hi) = rest.split_once(':')?;
        Some(Univariate::Legendre { lo: lo.parse().ok()?, hi: hi.parse().ok()? })
    }
}

/// Product basis: one univariate family per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisFamily {
    families: Vec<Univariate>,
}

impl BasisFamily {
    pub fn new(families: Vec<Univariate>) -> Self {
        Self { families }
    }

    pub fn hermite(dim: usize) -> Self {
        Self::new(vec![Univariate::Hermite; dim])
    }

    pub fn legendre(dim: usize, lo: f64, hi: f64) -> Self {
        Self::new(vec![Univariate::Legendre { lo, hi }; dim])
    }

    /// The orthonormal family matching each marginal, when one exists.
    /// Only standard normal and uniform marginals are supported.
    pub fn for_marginals(marginals: &[Marginal]) -> Option<Self> {
        marginals
            .iter()
            .map(|m| match *m {
                Marginal::Normal { mean, std } if mean == 0.0 && std == 1.0 => Some(Univariate::Hermite),
                Marginal::Uniform { lo, hi } => Some(Univariate::Legendre { lo, hi }),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(Self::new)
    }

    pub fn dim(&self) -> usize {
        self.families.len()
    }

    pub fn families(&self) -> &[Univariate] {
        &self.families
    }

    /// Table of univariate values: entry `[i * (degree + 1) + k]` is psi_k of
    /// coordinate i.
    fn univariate_table(&self, theta: &[f64], degree: usize) -> Result<Vec<f64>, PceError> {
        if theta.len() != self.dim() {
            return Err(PceError::DimensionMismatch { expected: self.dim(), got: theta.len() });
        }
        let stride = degree + 1;
        let mut table = vec![0.0; self.dim() * stride];
        for (i, (fam, &x)) in self.families.iter().zip(theta).enumerate() {
            fam.eval_all(i, x, &mut table[i * stride..(i + 1) * stride])?;
        }
        Ok(table)
    }

    /// All Psi_alpha(theta) in index-set order.
    pub fn evaluate(&self, set: &MultiIndexSet, theta: &[f64]) -> Result<Vec<f64>, PceError> {
        let mut out = vec![0.0; set.len()];
        self.evaluate_into(set, theta, &mut out)?;
        Ok(out)
    }

    pub fn evaluate_into(&self, set: &MultiIndexSet, theta: &[f64], out: &mut [f64]) -> Result<(), PceError> {
        if set.dim() != self.dim() {
            return Err(PceError::DimensionMismatch { expected: self.dim(), got: set.dim() });
        }
        let stride = set.degree() + 1;
        let table = self.univariate_table(theta, set.degree())?;
        for (slot, alpha) in out.iter_mut().zip(set.iter()) {
            let mut v = 1.0;
            for (i, &a) in alpha.exponents().iter().enumerate() {
                if a > 0 {
                    v *= table[i * stride + a as usize];
                }
            }
            *slot = v;
        }
        Ok(())
    }
}
