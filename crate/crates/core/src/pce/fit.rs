use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{BasisFamily, MultiIndexSet, PceError};
use crate::forward::{ForwardModel, ModelError};

/// Relative threshold below which a QR pivot is treated as a dependent column.
const RANK_TOLERANCE: f64 = 1e-10;

/// Basis functions evaluated at sample points: row i is Psi_1..Psi_M at theta_i.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    points: Vec<Vec<f64>>,
    matrix: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn new(basis: &BasisFamily, set: &MultiIndexSet, points: &[Vec<f64>]) -> Result<Self, PceError> {
        let rows: Vec<Vec<f64>> = points
            .par_iter()
            .map(|p| basis.evaluate(set, p))
            .collect::<Result<_, _>>()?;
        let matrix = DMatrix::from_fn(points.len(), set.len(), |i, j| rows[i][j]);
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(PceError::NonFinite("design matrix"));
        }
        Ok(Self { points: points.to_vec(), matrix })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Christoffel weights w_i = M / sum_m Psi_m(theta_i)^2.
pub fn christoffel_weights(design: &DesignMatrix) -> Vec<f64> {
    let m = design.cols() as f64;
    design
        .matrix()
        .row_iter()
        .map(|row| m / row.iter().map(|v| v * v).sum::<f64>())
        .collect()
}

/// Diagnostics of a least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// ||sqrt(W) (Psi c - b)||_2 per output column.
    pub residual_norms: Vec<f64>,
    pub weights: Vec<f64>,
}

/// A polynomial chaos expansion with one coefficient column per output.
#[derive(Debug, Clone, PartialEq)]
pub struct PCSurrogate {
    basis: BasisFamily,
    set: MultiIndexSet,
    coeffs: DMatrix<f64>,
}

impl PCSurrogate {
    pub fn new(basis: BasisFamily, set: MultiIndexSet, coeffs: DMatrix<f64>) -> Result<Self, PceError> {
        if basis.dim() != set.dim() {
            return Err(PceError::DimensionMismatch { expected: basis.dim(), got: set.dim() });
        }
        if coeffs.nrows() != set.len() {
            return Err(PceError::DimensionMismatch { expected: set.len(), got: coeffs.nrows() });
        }
        Ok(Self { basis, set, coeffs })
    }

    pub fn zeros(basis: BasisFamily, set: MultiIndexSet, outputs: usize) -> Result<Self, PceError> {
        let rows = set.len();
        Self::new(basis, set, DMatrix::zeros(rows, outputs))
    }

    pub fn basis(&self) -> &BasisFamily {
        &self.basis
    }

    pub fn index_set(&self) -> &MultiIndexSet {
        &self.set
    }

    /// Coefficient table, terms x outputs.
    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    pub fn outputs(&self) -> usize {
        self.coeffs.ncols()
    }

    /// f_N(theta) = sum_m c_m Psi_m(theta), accumulated in index-set order.
    pub fn eval(&self, theta: &[f64]) -> Result<Vec<f64>, PceError> {
        let psi = self.basis.evaluate(&self.set, theta)?;
        Ok(self.combine_basis(&psi))
    }

    fn combine_basis(&self, psi: &[f64]) -> Vec<f64> {
        (0..self.outputs())
            .map(|k| {
                let col = self.coeffs.column(k);
                let mut acc = 0.0;
                for (c, p) in col.iter().zip(psi) {
                    acc += c * p;
                }
                acc
            })
            .collect()
    }

    /// Batch evaluation; identical arithmetic to [`PCSurrogate::eval`].
    pub fn eval_many(&self, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, PceError> {
        points.par_iter().map(|p| self.eval(p)).collect()
    }
}

impl ForwardModel for PCSurrogate {
    fn input_dim(&self) -> usize {
        self.dim()
    }
    fn output_dim(&self) -> usize {
        self.outputs()
    }
    fn evaluate(&self, theta: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.eval(theta).map_err(|e| match e {
            PceError::DimensionMismatch { expected, got } => ModelError::DimensionMismatch { expected, got },
            other => ModelError::Domain(other.to_string()),
        })
    }
}

/// Weighted least-squares fit with Christoffel weights.
///
/// `values` is Q x m: row i holds f(theta_i).
pub fn fit_weighted_lsq(
    points: &[Vec<f64>],
    values: &DMatrix<f64>,
    basis: &BasisFamily,
    set: &MultiIndexSet,
) -> Result<(PCSurrogate, FitReport), PceError> {
    check_shape(points.len(), values, set)?;
    let design = DesignMatrix::new(basis, set, points)?;
    let weights = christoffel_weights(&design);
    fit_lsq_with_weights(&design, values, basis, set, &weights)
}

fn check_shape(samples: usize, values: &DMatrix<f64>, set: &MultiIndexSet) -> Result<(), PceError> {
    if values.nrows() != samples {
        return Err(PceError::ValueRowMismatch { rows: values.nrows(), samples });
    }
    if samples < set.len() {
        return Err(PceError::Undersampled { samples, terms: set.len() });
    }
    Ok(())
}

/// Minimises ||sqrt(W) Psi c - sqrt(W) b|| column-wise via Householder QR of
/// sqrt(W) Psi. Unit weights give the ordinary least-squares problem.
pub fn fit_lsq_with_weights(
    design: &DesignMatrix,
    values: &DMatrix<f64>,
    basis: &BasisFamily,
    set: &MultiIndexSet,
    weights: &[f64],
) -> Result<(PCSurrogate, FitReport), PceError> {
    check_shape(design.rows(), values, set)?;
    if design.cols() != set.len() {
        return Err(PceError::DimensionMismatch { expected: set.len(), got: design.cols() });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(PceError::NonFinite("sample values"));
    }
    let q = design.rows();
    let m = design.cols();
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let mut a = design.matrix().clone();
    let mut b = values.clone();
    for i in 0..q {
        a.row_mut(i).scale_mut(sqrt_w[i]);
        b.row_mut(i).scale_mut(sqrt_w[i]);
    }
    let col_norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();

    let qr = a.clone().qr();
    let r = qr.r();
    for j in 0..m {
        let pivot = r[(j, j)].abs();
        if !(pivot > RANK_TOLERANCE * col_norms[j]) {
            return Err(PceError::RankDeficient { column: j, index: set.indices()[j].to_string() });
        }
    }
    let mut qtb = b.clone();
    qr.q_tr_mul(&mut qtb);
    let rhs = qtb.rows(0, m).into_owned();
    let coeffs = r
        .solve_upper_triangular(&rhs)
        .ok_or(PceError::RankDeficient { column: 0, index: "triangular solve".into() })?;

    let resid = &a * &coeffs - &b;
    let residual_norms = resid.column_iter().map(|c| c.norm()).collect();
    let surrogate = PCSurrogate::new(basis.clone(), set.clone(), coeffs)?;
    Ok((surrogate, FitReport { residual_norms, weights: weights.to_vec() }))
}
