use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{EkiError, NoiseModel};
use crate::prior::ProductPrior;

/// Parameter members (d x N_e, one column per member) and, once predicted,
/// their model outputs (m x N_e).
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub members: DMatrix<f64>,
    pub predictions: Option<DMatrix<f64>>,
    pub iteration: usize,
}

impl Ensemble {
    pub fn new(members: DMatrix<f64>) -> Result<Self, EkiError> {
        if members.ncols() < 2 {
            return Err(EkiError::EnsembleTooSmall(members.ncols()));
        }
        Ok(Self { members, predictions: None, iteration: 0 })
    }

    pub fn size(&self) -> usize {
        self.members.ncols()
    }

    pub fn dim(&self) -> usize {
        self.members.nrows()
    }

    pub fn mean(&self) -> DVector<f64> {
        column_mean(&self.members)
    }

    pub fn member(&self, j: usize) -> Vec<f64> {
        self.members.column(j).iter().copied().collect()
    }

    pub fn member_points(&self) -> Vec<Vec<f64>> {
        (0..self.size()).map(|j| self.member(j)).collect()
    }

    pub fn prediction_mean(&self) -> Option<DVector<f64>> {
        self.predictions.as_ref().map(column_mean)
    }
}

pub(crate) fn column_mean(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.ncols() as f64;
    DVector::from_fn(m.nrows(), |i, _| m.row(i).iter().sum::<f64>() / n)
}

/// N_e i.i.d. prior draws, members drawn one after another.
pub fn init_ensemble<R: Rng + ?Sized>(prior: &ProductPrior, size: usize, rng: &mut R) -> Result<Ensemble, EkiError> {
    if size < 2 {
        return Err(EkiError::EnsembleTooSmall(size));
    }
    let draws = prior.sample_many(size, rng);
    Ensemble::new(DMatrix::from_fn(prior.dim(), size, |i, j| draws[j][i]))
}

/// y^(j) = y + L z^(j) with z^(j) standard normal; one column per member.
pub fn perturb_data<R: Rng + ?Sized>(y: &DVector<f64>, noise: &NoiseModel, size: usize, rng: &mut R) -> Result<DMatrix<f64>, EkiError> {
    if noise.dim() != y.len() {
        return Err(EkiError::Dimension { what: "noise model", expected: y.len(), got: noise.dim() });
    }
    let mut out = DMatrix::zeros(y.len(), size);
    for j in 0..size {
        let z = DVector::from_fn(y.len(), |_, _| StandardNormal.sample(rng));
        out.set_column(j, &(y + noise.apply_sqrt(&z)));
    }
    Ok(out)
}

/// Sample cross-covariance C^{theta omega} (d x m) and prediction covariance
/// C^{omega omega} (m x m), both normalised by N_e - 1.
pub fn empirical_covariances(members: &DMatrix<f64>, predictions: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), EkiError> {
    let ne = members.ncols();
    if ne < 2 {
        return Err(EkiError::EnsembleTooSmall(ne));
    }
    if predictions.ncols() != ne {
        return Err(EkiError::Dimension { what: "prediction columns", expected: ne, got: predictions.ncols() });
    }
    let theta_c = center(members);
    let omega_c = center(predictions);
    let scale = 1.0 / (ne as f64 - 1.0);
    let c_tw = &theta_c * omega_c.transpose() * scale;
    let mut c_ww = &omega_c * omega_c.transpose() * scale;
    // exact symmetry; the product is symmetric only up to rounding
    let m = c_ww.nrows();
    for i in 0..m {
        for j in 0..i {
            let v = 0.5 * (c_ww[(i, j)] + c_ww[(j, i)]);
            c_ww[(i, j)] = v;
            c_ww[(j, i)] = v;
        }
    }
    Ok((c_tw, c_ww))
}

fn center(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = column_mean(m);
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        col -= &mean;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::Marginal;
    use crate::rng::stream_rng;

    #[test]
    fn ensemble_is_reproducible() {
        let p = ProductPrior::standard_normal(3);
        let a = init_ensemble(&p, 2, &mut stream_rng(11, 1)).unwrap();
        let b = init_ensemble(&p, 2, &mut stream_rng(11, 1)).unwrap();
        assert_eq!(a, b);
        assert!(matches!(init_ensemble(&p, 1, &mut stream_rng(0, 1)), Err(EkiError::EnsembleTooSmall(1))));
    }

    #[test]
    fn large_ensemble_mean_near_zero() {
        let e = init_ensemble(&ProductPrior::standard_normal(3), 100_000, &mut stream_rng(5, 1)).unwrap();
        assert!(e.mean().amax() < 0.02);
    }

    #[test]
    fn point_mass_prior_has_zero_covariance() {
        let p = ProductPrior::new(vec![Marginal::PointMass { value: 1.5 }; 2]);
        let e = init_ensemble(&p, 5, &mut stream_rng(5, 1)).unwrap();
        assert!(e.members.iter().all(|&v| v == 1.5));
        let preds = e.members.map(|v| v * 3.0);
        let (ctw, cww) = empirical_covariances(&e.members, &preds).unwrap();
        assert!(ctw.iter().chain(cww.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn zero_noise_perturbation_is_exact() {
        let y = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        let p = perturb_data(&y, &NoiseModel::isotropic(3, 0.0), 4, &mut stream_rng(1, 2)).unwrap();
        for c in p.column_iter() {
            assert_eq!(c, y.column(0));
        }
    }

    #[test]
    fn perturbation_statistics() {
        let cov = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.0, 0.3, 2.0, -0.4, 0.0, -0.4, 0.5]);
        let noise = NoiseModel::dense(cov.clone()).unwrap();
        let y = DVector::from_vec(vec![10.0, 0.0, -4.0]);
        let n = 100_000;
        let p = perturb_data(&y, &noise, n, &mut stream_rng(3, 2)).unwrap();
        let mean = column_mean(&p);
        for i in 0..3 {
            assert!((mean[i] - y[i]).abs() < 3.0 * cov[(i, i)].sqrt() / (n as f64).sqrt());
        }
        let c = center(&p);
        let sample_cov = &c * c.transpose() / (n as f64 - 1.0);
        assert!((sample_cov - &cov).norm() < 0.05 * cov.norm());
    }

    #[test]
    fn two_member_scalar_covariances() {
        let theta = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let (ctw, cww) = empirical_covariances(&theta, &theta).unwrap();
        assert_eq!(ctw[(0, 0)], 2.0);
        assert_eq!(cww[(0, 0)], 2.0);
    }

    #[test]
    fn linear_model_sample_identities() {
        let mut rng = stream_rng(8, 1);
        let e = init_ensemble(&ProductPrior::standard_normal(3), 40, &mut rng).unwrap();
        let a = DMatrix::from_fn(4, 3, |i, j| (i as f64 + 1.0) * 0.5 - j as f64);
        let preds = &a * &e.members;
        let (ctw, cww) = empirical_covariances(&e.members, &preds).unwrap();
        // oracle: sample covariance of theta by explicit double loop
        let mean = e.mean();
        let mut ctt = DMatrix::<f64>::zeros(3, 3);
        for j in 0..40 {
            for p in 0..3 {
                for q in 0..3 {
                    ctt[(p, q)] += (e.members[(p, j)] - mean[p]) * (e.members[(q, j)] - mean[q]) / 39.0;
                }
            }
        }
        assert!((ctw - &ctt * a.transpose()).amax() < 1e-12);
        assert!((cww - &a * &ctt * a.transpose()).amax() < 1e-12);
    }
}
