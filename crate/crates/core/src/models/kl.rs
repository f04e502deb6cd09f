use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{Grid2D, ModelsError};
use crate::rng::{stream_rng, streams};

/// `variance * exp(-|x1 - x2| / (2 l2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialKernel {
    pub variance: f64,
    pub l2: f64,
}

impl Default for ExponentialKernel {
    fn default() -> Self {
        Self { variance: 1.0, l2: 0.25 }
    }
}

impl ExponentialKernel {
    pub fn eval(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let r = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        self.variance * (-r / (2.0 * self.l2)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    /// Smallest number of modes whose eigenvalues reach this fraction of the trace.
    Energy(f64),
    Modes(usize),
}

/// Leading Nyström eigenpairs of the covariance operator on a grid.
#[derive(Debug, Clone)]
pub struct KlModes {
    pub grid: Grid2D,
    pub kernel: ExponentialKernel,
    weights: Vec<f64>,
    /// Retained eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Nodal eigenfunction values (nodes x modes), orthonormal in the
    /// trapezoid inner product.
    pub functions: DMatrix<f64>,
    /// Discrete trace: sum of w_i C(x_i, x_i).
    pub trace: f64,
}

impl KlModes {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn energy_fraction(&self) -> f64 {
        self.eigenvalues.iter().sum::<f64>() / self.trace
    }

    /// Eigenfunctions at arbitrary points by Nyström extension:
    /// phi_i(x) = sum_j w_j C(x, x_j) phi_i(x_j) / lambda_i.
    pub fn extend(&self, points: &[[f64; 2]]) -> DMatrix<f64> {
        let nodes = self.grid.points();
        let d = self.len();
        let rows: Vec<Vec<f64>> = points
            .par_iter()
            .map(|&x| {
                let c: Vec<f64> = nodes.iter().zip(&self.weights).map(|(&z, w)| w * self.kernel.eval(x, z)).collect();
                (0..d)
                    .map(|i| {
                        let s: f64 = self.functions.column(i).iter().zip(&c).map(|(f, k)| f * k).sum();
                        s / self.eigenvalues[i]
                    })
                    .collect()
            })
            .collect();
        DMatrix::from_fn(points.len(), d, |p, i| rows[p][i])
    }

    /// `sqrt(lambda_i) phi_i` at the nodes of `grid`.
    pub fn scaled_features(&self, grid: &Grid2D) -> DMatrix<f64> {
        let mut f = if *grid == self.grid { self.functions.clone() } else { self.extend(&grid.points()) };
        for (i, mut col) in f.column_iter_mut().enumerate() {
            col *= self.eigenvalues[i].sqrt();
        }
        f
    }
}

/// Nyström discretization with trapezoid weights, solved by Lanczos with full
/// reorthogonalization. The Krylov space grows until the requested modes
/// have converged.
pub fn kl_modes(kernel: ExponentialKernel, grid: Grid2D, truncation: Truncation) -> Result<KlModes, ModelsError> {
    match truncation {
        Truncation::Energy(f) if !(f > 0.0 && f <= 1.0) => {
            return Err(ModelsError::Config(format!("energy fraction must lie in (0, 1], got {f}")))
        }
        Truncation::Modes(d) if d == 0 || d > grid.len() => {
            return Err(ModelsError::Config(format!("cannot keep {d} modes on {} nodes", grid.len())))
        }
        _ => {}
    }
    let nodes = grid.points();
    let weights = grid.trapezoid_weights();
    let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let n = nodes.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| (0..n).map(|i| sw[i] * sw[j] * kernel.eval(nodes[i], nodes[j])).collect())
        .collect();
    let a = DMatrix::from_fn(n, n, |i, j| cols[j][i]);
    let trace: f64 = (0..n).map(|i| weights[i] * kernel.eval(nodes[i], nodes[i])).sum();

    let reached = |vals: &[f64], f: f64| {
        let mut acc = 0.0;
        for (k, v) in vals.iter().enumerate() {
            acc += v;
            if acc >= f * trace - 1e-12 * trace {
                return Some(k + 1);
            }
        }
        None
    };
    let (values, vectors) = lanczos(&a, |vals| match truncation {
        Truncation::Energy(f) => reached(vals, f).is_some(),
        Truncation::Modes(d) => vals.len() >= d,
    })?;
    let d = match truncation {
        Truncation::Modes(d) => d,
        Truncation::Energy(f) => reached(&values, f).unwrap_or_else(|| values.iter().filter(|&&v| v > 0.0).count()),
    };
    if values[..d].iter().any(|&v| !(v > 0.0)) {
        return Err(ModelsError::Config(format!("only {} positive eigenvalues available", values.iter().filter(|&&v| v > 0.0).count())));
    }
    let mut functions = DMatrix::from_fn(n, d, |p, i| vectors[(p, i)] / sw[p]);
    for mut col in functions.column_iter_mut() {
        let pivot = col.iamax();
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
    }
    Ok(KlModes { grid, kernel, weights, eigenvalues: values[..d].to_vec(), functions, trace })
}

/// Converged leading eigenpairs of the symmetric matrix `a`, descending.
/// `done` receives the converged prefix after every block of iterations.
fn lanczos<F: Fn(&[f64]) -> bool>(a: &DMatrix<f64>, done: F) -> Result<(Vec<f64>, DMatrix<f64>), ModelsError> {
    let n = a.nrows();
    let mut rng = stream_rng(0, streams::OPERATOR);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let random_unit = |basis: &[DVector<f64>], rng: &mut rand_chacha::ChaCha8Rng| {
        let mut v = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
        orthogonalize(&mut v, basis);
        v.normalize()
    };
    let mut v = random_unit(&basis, &mut rng);
    let mut scale = 0.0f64;
    loop {
        let mut w = a * &v;
        let aj = v.dot(&w);
        basis.push(v);
        alpha.push(aj);
        scale = scale.max(aj.abs());
        orthogonalize(&mut w, &basis);
        let b = w.norm();
        let k = basis.len();
        let breakdown = b <= 1e-12 * scale.max(f64::MIN_POSITIVE);
        if k == n || k % 16 == 0 || breakdown {
            let t = DMatrix::from_fn(k, k, |i, j| {
                if i == j {
                    alpha[i]
                } else if i + 1 == j {
                    beta[i]
                } else if j + 1 == i {
                    beta[j]
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(t);
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
            let top = eig.eigenvalues[order[0]].abs();
            let last = if breakdown { 0.0 } else { b };
            let converged = order
                .iter()
                .take_while(|&&i| k == n || (last * eig.eigenvectors[(k - 1, i)]).abs() <= 1e-10 * top)
                .count();
            let values: Vec<f64> = order[..converged].iter().map(|&i| eig.eigenvalues[i]).collect();
            if k == n {
                if let Some(&min) = values.last() {
                    if min < -1e-10 * top {
                        return Err(ModelsError::Indefinite(min));
                    }
                }
            }
            if k == n || done(&values) {
                let q = DMatrix::from_columns(&basis);
                let s = DMatrix::from_fn(k, converged, |r, c| eig.eigenvectors[(r, order[c])]);
                return Ok((values, q * s));
            }
        }
        if breakdown {
            beta.push(0.0);
            v = random_unit(&basis, &mut rng);
        } else {
            beta.push(b);
            v = w / b;
        }
    }
}

/// Two passes of classical Gram-Schmidt against `basis`.
fn orthogonalize(v: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for _ in 0..2 {
        let coeffs: Vec<f64> = basis.par_iter().map(|q| q.dot(v)).collect();
        for (q, c) in basis.iter().zip(coeffs) {
            v.axpy(-c, q, 1.0);
        }
    }
}
