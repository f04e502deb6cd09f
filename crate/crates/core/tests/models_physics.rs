mod common;

use ampc_eki::models::{
    caputo_l1_weights, generate_synthetic_data, solve_tfpde, FieldParam, Grid2D, ObservationSpec, RadialBasisField, Source,
    TfpdeConfig, TfpdeModel,
};
use ampc_eki::rng::stream_rng;
use rand::Rng;
use statrs::function::gamma::gamma;

fn mean_ode_value(alpha: f64, dt: f64) -> f64 {
    let cfg = TfpdeConfig { alpha, dt, grid: Grid2D::square(5).unwrap(), source: Source::Uniform(1.0), ..Default::default() };
    let traj = solve_tfpde(&vec![1.0; 25], &cfg).unwrap();
    traj.integral(traj.states.len() - 1)
}

#[test]
fn caputo_ode_mean_matches_closed_form() {
    let exact = 1.0 / gamma(1.5);
    let v = mean_ode_value(0.5, 0.01);
    assert!(((v - exact) / exact).abs() < 0.02, "{v} vs {exact}");
}

#[test]
fn l1_error_decreases_at_expected_rate() {
    let exact = 1.0 / gamma(1.5);
    let e1 = (mean_ode_value(0.5, 0.02) - exact).abs();
    let e2 = (mean_ode_value(0.5, 0.01) - exact).abs();
    assert!(e1 / e2 >= 2f64.powf(1.0f64.min(1.5)) * 0.8, "ratio {}", e1 / e2);
}

#[test]
fn near_integer_order_matches_backward_euler_heat_solver() {
    let grid = Grid2D::square(13).unwrap();
    let kappa = FieldParam::RadialWeights(RadialBasisField::default())
        .kappa_on(&grid, &[0.5, 1.0, 0.8, 0.3, 2.0, 0.6, 1.2, 0.4, 0.9])
        .unwrap();
    let cfg = TfpdeConfig { alpha: 0.999, grid, ..Default::default() };
    let traj = solve_tfpde(&kappa, &cfg).unwrap();
    let u = traj.states.last().unwrap();
    let oracle = common::backward_euler_oracle(grid, &kappa, 0.01, 100, |x, t| {
        (-t as f64).exp() * (-((x[0] - 0.25).powi(2) + (x[1] - 0.75).powi(2)) / (2.0 * 0.01)).exp()
    });
    let range = oracle.iter().cloned().fold(f64::MIN, f64::max) - oracle.iter().cloned().fold(f64::MAX, f64::min);
    let diff = u.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff <= 0.01 * range, "max diff {diff}, range {range}");
}

#[test]
fn zero_flux_zero_source_conserves_integral() {
    let grid = Grid2D::square(17).unwrap();
    let kappa: Vec<f64> = grid.points().iter().map(|p| 0.2 + p[0] * p[0] + (3.0 * p[1]).sin().abs()).collect();
    let initial = grid.points().iter().map(|p| (-20.0 * ((p[0] - 0.3).powi(2) + (p[1] - 0.6).powi(2))).exp()).collect();
    let cfg = TfpdeConfig { grid, source: Source::Zero, initial: Some(initial), ..Default::default() };
    let traj = solve_tfpde(&kappa, &cfg).unwrap();
    for k in 1..traj.states.len() {
        assert!((traj.integral(k) - traj.integral(k - 1)).abs() < 1e-10);
    }
    assert!(traj.integral(0) > 0.01);
}

#[test]
fn grid_refinement_is_second_order() {
    let solve_at = |n: usize| {
        let grid = Grid2D::square(n).unwrap();
        let kappa: Vec<f64> = grid.points().iter().map(|p| 1.0 + 0.5 * (2.0 * p[0]).sin() * (3.0 * p[1]).cos()).collect();
        let cfg = TfpdeConfig { grid, dt: 0.05, ..Default::default() };
        (grid, solve_tfpde(&kappa, &cfg).unwrap().states.pop().unwrap())
    };
    let (g1, u1) = solve_at(21);
    let (g2, u2) = solve_at(41);
    let (g3, u3) = solve_at(81);
    let mut d12: f64 = 0.0;
    let mut d23: f64 = 0.0;
    for j in 0..g1.ny {
        for i in 0..g1.nx {
            let a = u1[g1.index(i, j)];
            let b = u2[g2.index(2 * i, 2 * j)];
            let c = u3[g3.index(4 * i, 4 * j)];
            d12 = d12.max((a - b).abs());
            d23 = d23.max((b - c).abs());
        }
    }
    let order = (d12 / d23).log2();
    assert!(order >= 1.7, "observed order {order}");
}

#[test]
fn l1_weights_formula() {
    let b = caputo_l1_weights(0.5, 3).unwrap();
    assert!((b[2] - (3f64.sqrt() - 2f64.sqrt())).abs() < 1e-15);
}

#[test]
fn radial_field_duplicate_formula() {
    let f = RadialBasisField::default();
    let mut rng = stream_rng(17, 0);
    let ticks = [0.25, 0.5, 0.75];
    for _ in 0..100 {
        let theta: Vec<f64> = (0..9).map(|_| rng.random_range(0.01..5.0)).collect();
        let x = [rng.random::<f64>(), rng.random::<f64>()];
        let mut expected = 0.0;
        for (a, cy) in ticks.iter().enumerate() {
            for (b, cx) in ticks.iter().enumerate() {
                let r2 = (x[0] - cx) * (x[0] - cx) + (x[1] - cy) * (x[1] - cy);
                expected += theta[3 * a + b] * (-0.5 * r2 / (0.15 * 0.15)).exp();
            }
        }
        let got = f.kappa(&theta, x);
        assert!((got - expected).abs() <= 1e-14 * expected.max(1.0));
    }
}

#[test]
fn realized_noise_level_concentrates() {
    let cfg = TfpdeConfig { grid: Grid2D::square(9).unwrap(), dt: 0.25, ..Default::default() };
    let spec = ObservationSpec::uniform_grid(5, vec![0.25, 0.75, 1.0]);
    let model = TfpdeModel::new(cfg, FieldParam::RadialLog(RadialBasisField::default()), spec).unwrap();
    let m = 75.0f64;
    let band = 3.0 * (2.0 * m).sqrt();
    for seed in 0..5 {
        let d = generate_synthetic_data(&model, &[0.0; 9], 1e-3, 2, seed).unwrap();
        let e2 = d.eta * d.eta;
        assert!((m - band..=m + band).contains(&e2), "eta^2 = {e2}");
        let direct: f64 = d.y.iter().zip(&d.clean).map(|(y, c)| ((y - c) / 1e-3).powi(2)).sum::<f64>().sqrt();
        assert!((direct - d.eta).abs() < 1e-6 * d.eta);
    }
}
