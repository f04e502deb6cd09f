//! Oracles shared by the integration tests. The matrix helpers use plain
//! `Vec<Vec<f64>>` loops so they share no code path with the library.

#![allow(dead_code)]

use ampc_eki::forward::FnModel;
use ampc_eki::models::Grid2D;
use ampc_eki::multifidelity::{refine, MultiFidelitySurrogate};
use ampc_eki::pce::{BasisFamily, MultiIndexSet, PCSurrogate, Univariate};
use ampc_eki::prior::{Marginal, ProductPrior};
use ampc_eki::rng::stream_rng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn zeros(r: usize, c: usize) -> Mat {
    vec![vec![0.0; c]; r]
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for l in 0..k {
                s += a[i][l] * b[l][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn transpose(a: &Mat) -> Mat {
    let mut out = zeros(a[0].len(), a.len());
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out[j][i] = *v;
        }
    }
    out
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn inverse(a: &Mat) -> Mat {
    let n = a.len();
    let mut aug: Mat = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs())).unwrap();
        aug.swap(col, piv);
        let p = aug[col][col];
        assert!(p.abs() > 1e-300, "singular matrix");
        for v in aug[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = aug[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        aug[r][c] -= f * aug[col][c];
                    }
                }
            }
        }
    }
    aug.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn matvec(a: &Mat, x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Sample covariance of the columns of `a` (rows x N) against `b`, 1 / (N - 1).
pub fn cross_cov(a: &Mat, b: &Mat) -> Mat {
    let n = a[0].len();
    let mean = |m: &Mat| -> Vec<f64> { m.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect() };
    let (ma, mb) = (mean(a), mean(b));
    let mut out = zeros(a.len(), b.len());
    for i in 0..a.len() {
        for k in 0..b.len() {
            let mut s = 0.0;
            for j in 0..n {
                s += (a[i][j] - ma[i]) * (b[k][j] - mb[k]);
            }
            out[i][k] = s / (n as f64 - 1.0);
        }
    }
    out
}

/// theta_j + C^{tw} (C^{ww} + alpha Gamma)^{-1} (y_j - omega_j), Gamma = diag(gamma).
pub fn kalman_update(members: &Mat, preds: &Mat, perturbed: &Mat, gamma: &[f64], alpha: f64) -> Mat {
    let ctw = cross_cov(members, preds);
    let mut s = cross_cov(preds, preds);
    for (i, g) in gamma.iter().enumerate() {
        s[i][i] += alpha * g;
    }
    let gain = matmul(&ctw, &inverse(&s));
    let ne = members[0].len();
    let mut out = members.clone();
    for j in 0..ne {
        let innov: Vec<f64> = (0..preds.len()).map(|i| perturbed[i][j] - preds[i][j]).collect();
        let step = matvec(&gain, &innov);
        for (i, s) in step.iter().enumerate() {
            out[i][j] += s;
        }
    }
    out
}

/// Left minus right side of the alpha acceptance inequality for diagonal Gamma:
/// alpha ||Gamma^{1/2} (C + alpha Gamma)^{-1} r|| - rho ||Gamma^{-1/2} r||.
pub fn alpha_slack(c: &Mat, gamma: &[f64], r: &[f64], rho: f64, alpha: f64) -> f64 {
    let mut s = c.clone();
    for (i, g) in gamma.iter().enumerate() {
        s[i][i] += alpha * g;
    }
    let x = matvec(&inverse(&s), r);
    let lhs: Vec<f64> = x.iter().zip(gamma).map(|(v, g)| v * g.sqrt()).collect();
    let rhs: Vec<f64> = r.iter().zip(gamma).map(|(v, g)| v / g.sqrt()).collect();
    alpha * norm(&lhs) - rho * norm(&rhs)
}

/// Binomial coefficient in u128.
pub fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Classical backward Euler for u_t = div(kappa grad u) + f with mirrored
/// ghost nodes, assembled as a dense nonsymmetric finite-difference operator.
pub fn backward_euler_oracle(grid: Grid2D, kappa: &[f64], dt: f64, steps: usize, source: impl Fn([f64; 2], f64) -> f64) -> Vec<f64> {
    let (nx, ny) = (grid.nx, grid.ny);
    let (hx, hy) = (grid.hx(), grid.hy());
    let n = grid.len();
    let hm = |a: f64, b: f64| 2.0 * a * b / (a + b);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..ny {
        for i in 0..nx {
            let p = grid.index(i, j);
            let mut nb = Vec::new();
            // mirrored ghosts double the single interior neighbour's flux
            match (i, nx - 1 - i) {
                (0, _) => nb.push((grid.index(1, j), 2.0 / (hx * hx))),
                (_, 0) => nb.push((grid.index(nx - 2, j), 2.0 / (hx * hx))),
                _ => {
                    nb.push((grid.index(i - 1, j), 1.0 / (hx * hx)));
                    nb.push((grid.index(i + 1, j), 1.0 / (hx * hx)));
                }
            }
            match (j, ny - 1 - j) {
                (0, _) => nb.push((grid.index(i, 1), 2.0 / (hy * hy))),
                (_, 0) => nb.push((grid.index(i, ny - 2), 2.0 / (hy * hy))),
                _ => {
                    nb.push((grid.index(i, j - 1), 1.0 / (hy * hy)));
                    nb.push((grid.index(i, j + 1), 1.0 / (hy * hy)));
                }
            }
            for (q, s) in nb {
                let c = s * hm(kappa[p], kappa[q]);
                l[(p, q)] += c;
                l[(p, p)] -= c;
            }
        }
    }
    let a = DMatrix::<f64>::identity(n, n) / dt - &l;
    let lu = a.lu();
    let mut u = DVector::<f64>::zeros(n);
    for k in 1..=steps {
        let t = k as f64 * dt;
        let rhs = DVector::from_fn(n, |p, _| u[p] / dt + source(grid.point(p), t));
        u = lu.solve(&rhs).unwrap();
    }
    u.iter().copied().collect()
}


/// Random monomial terms (coefficient, exponents) of total degree <= `degree`.
pub fn random_polynomial(dim: usize, degree: usize, terms: usize, rng: &mut impl Rng) -> Vec<(f64, Vec<u32>)> {
    (0..terms)
        .map(|_| {
            let mut e = vec![0u32; dim];
            let total = rng.random_range(0..=degree);
            for _ in 0..total {
                e[rng.random_range(0..dim)] += 1;
            }
            (rng.random_range(-2.0..2.0), e)
        })
        .collect()
}

pub fn eval_polynomial(p: &[(f64, Vec<u32>)], x: &[f64]) -> f64 {
    p.iter().map(|(c, e)| c * e.iter().zip(x).map(|(&k, &v)| v.powi(k as i32)).product::<f64>()).sum()
}

/// Largest |f_M - f_H| / max(1, |f_H|) over 100 held-out prior draws after
/// one correction of a random low-fidelity expansion by a degree-`nc` gap.
pub fn correction_gap(seed: u64, dim: usize, n: usize, nc: usize, outputs: usize) -> f64 {
    let mut rng = stream_rng(seed, 40);
    let marginals: Vec<Marginal> = (0..dim)
        .map(|i| if i % 2 == 0 { Marginal::Normal { mean: 0.0, std: 1.0 } } else { Marginal::Uniform { lo: -1.0, hi: 2.0 } })
        .collect();
    let families: Vec<Univariate> = marginals
        .iter()
        .map(|m| match *m {
            Marginal::Uniform { lo, hi } => Univariate::Legendre { lo, hi },
            _ => Univariate::Hermite,
        })
        .collect();
    let prior = ProductPrior::new(marginals);
    let set = MultiIndexSet::total_degree(dim, n).unwrap();
    let coeffs = DMatrix::from_fn(set.len(), outputs, |_, _| rng.random_range(-1.0..1.0));
    let low = PCSurrogate::new(BasisFamily::new(families), set, coeffs).unwrap();
    let gaps: Vec<_> = (0..outputs).map(|_| random_polynomial(dim, nc, 6, &mut rng)).collect();

    let low_h = low.clone();
    let gaps_h = gaps.clone();
    let high = FnModel::new(dim, outputs, move |t: &[f64]| {
        let base = low_h.eval(t).unwrap();
        base.iter().zip(&gaps_h).map(|(b, p)| b + eval_polynomial(p, t)).collect()
    });
    let q2 = 2 * MultiIndexSet::cardinality(dim, nc).unwrap();
    let points = prior.sample_many(q2, &mut rng);
    let merged = refine(&MultiFidelitySurrogate::from_base(low.clone()), &high, &points, nc, None, None).unwrap().surrogate;

    let held_out = prior.sample_many(100, &mut stream_rng(seed, 41));
    let mut worst = 0.0f64;
    for x in &held_out {
        let got = merged.eval(x).unwrap();
        let base = low.eval(x).unwrap();
        for k in 0..outputs {
            let want = base[k] + eval_polynomial(&gaps[k], x);
            worst = worst.max((got[k] - want).abs() / want.abs().max(1.0));
        }
    }
    worst
}

