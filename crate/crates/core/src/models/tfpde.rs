use statrs::function::gamma::gamma;

use super::banded::SymBand;
use super::{Grid2D, ModelsError};

/// Right-hand side of the diffusion equation.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    /// `exp(-t) * exp(-|x - center|^2 / (2 width^2))`.
    Gaussian { center: [f64; 2], width: f64 },
    Zero,
    /// Constant in space and time.
    Uniform(f64),
}

impl Default for Source {
    fn default() -> Self {
        Source::Gaussian { center: [0.25, 0.75], width: 0.1 }
    }
}

impl Source {
    fn fill(&self, grid: &Grid2D, t: f64, out: &mut [f64]) {
        match *self {
            Source::Gaussian { center, width } => {
                let decay = (-t).exp();
                for (p, o) in out.iter_mut().enumerate() {
                    let x = grid.point(p);
                    let r2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
                    *o = decay * (-r2 / (2.0 * width * width)).exp();
                }
            }
            Source::Zero => out.fill(0.0),
            Source::Uniform(c) => out.fill(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfpdeConfig {
    /// Caputo order in (0, 1).
    pub alpha: f64,
    pub dt: f64,
    pub t_final: f64,
    pub grid: Grid2D,
    pub source: Source,
    /// Nodal initial state; zero when absent.
    pub initial: Option<Vec<f64>>,
}

impl Default for TfpdeConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            dt: 0.01,
            t_final: 1.0,
            grid: Grid2D { nx: 41, ny: 41 },
            source: Source::default(),
            initial: None,
        }
    }
}

impl TfpdeConfig {
    pub fn steps(&self) -> Result<usize, ModelsError> {
        steps_to(self.t_final, self.dt)
    }

    /// Same problem on a grid and time step refined by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self { dt: self.dt / factor as f64, grid: self.grid.refined(factor), initial: None, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), ModelsError> {
        check_alpha(self.alpha)?;
        if !(self.dt > 0.0) || !(self.t_final > 0.0) {
            return Err(ModelsError::Config(format!("dt and t_final must be positive, got {} and {}", self.dt, self.t_final)));
        }
        self.steps()?;
        if let Some(u0) = &self.initial {
            if u0.len() != self.grid.len() {
                return Err(ModelsError::Config(format!("initial state has {} values for {} nodes", u0.len(), self.grid.len())));
            }
        }
        Ok(())
    }
}

/// Index k with `k * dt == t`, if `t` lies on the time grid.
pub fn steps_to(t: f64, dt: f64) -> Result<usize, ModelsError> {
    let s = t / dt;
    let k = s.round();
    if (s - k).abs() > 1e-8 * s.max(1.0) || k < 0.0 {
        return Err(ModelsError::TimeMisaligned { time: t, dt });
    }
    Ok(k as usize)
}

fn check_alpha(alpha: f64) -> Result<(), ModelsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ModelsError::Alpha(alpha));
    }
    Ok(())
}

/// L1 weights `b_k = (k+1)^(1-alpha) - k^(1-alpha)` for `k = 0..n`.
pub fn caputo_l1_weights(alpha: f64, n: usize) -> Result<Vec<f64>, ModelsError> {
    check_alpha(alpha)?;
    let e = 1.0 - alpha;
    Ok((0..n).map(|k| ((k + 1) as f64).powf(e) - (k as f64).powf(e)).collect())
}

/// `dt^(-alpha) / Gamma(2 - alpha)`.
pub fn caputo_l1_scale(alpha: f64, dt: f64) -> f64 {
    dt.powf(-alpha) / gamma(2.0 - alpha)
}

/// Lumped mass (diagonal) and stiffness of the vertex-centred finite-volume
/// discretization of `-div(kappa grad u)` with zero-flux boundaries. Face
/// diffusivities are harmonic means of the nodal values; boundary nodes own
/// half (or quarter) cells.
pub fn assemble(grid: &Grid2D, kappa: &[f64]) -> Result<(Vec<f64>, SymBand), ModelsError> {
    if kappa.len() != grid.len() {
        return Err(ModelsError::Config(format!("kappa has {} values for {} nodes", kappa.len(), grid.len())));
    }
    if let Some((node, &value)) = kappa.iter().enumerate().find(|(_, &k)| !(k > 0.0 && k.is_finite())) {
        return Err(ModelsError::NonPositiveKappa { node, value });
    }
    let (nx, ny, hx, hy) = (grid.nx, grid.ny, grid.hx(), grid.hy());
    let half = |k: usize, n: usize| if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
    let harmonic = |a: f64, b: f64| 2.0 * a * b / (a + b);
    let mass = grid.trapezoid_weights();
    let mut stiff = SymBand::zeros(grid.len(), nx);
    let mut couple = |p: usize, q: usize, c: f64| {
        stiff.add(p, p, c);
        stiff.add(q, q, c);
        stiff.add(q, p, -c);
    };
    for j in 0..ny {
        for i in 0..nx - 1 {
            let (p, q) = (grid.index(i, j), grid.index(i + 1, j));
            couple(p, q, harmonic(kappa[p], kappa[q]) * hy * half(j, ny) / hx);
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            let (p, q) = (grid.index(i, j), grid.index(i, j + 1));
            couple(p, q, harmonic(kappa[p], kappa[q]) * hx * half(i, nx) / hy);
        }
    }
    Ok((mass, stiff))
}

/// Nodal states at `t = k * dt`, `k = 0..=steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: Grid2D,
    pub dt: f64,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn at_time(&self, t: f64) -> Result<&[f64], ModelsError> {
        let k = steps_to(t, self.dt)?;
        self.states.get(k).map(|v| v.as_slice()).ok_or(ModelsError::TimeMisaligned { time: t, dt: self.dt })
    }

    /// Trapezoid integral of the state at step k.
    pub fn integral(&self, k: usize) -> f64 {
        self.grid.trapezoid_weights().iter().zip(&self.states[k]).map(|(w, u)| w * u).sum()
    }
}

/// Implicit L1 time stepping of the Caputo-time diffusion problem with
/// nodal diffusivity `kappa`. The system matrix is factored once.
pub fn solve_tfpde(kappa: &[f64], cfg: &TfpdeConfig) -> Result<Trajectory, ModelsError> {
    cfg.validate()?;
    let grid = cfg.grid;
    let steps = cfg.steps()?;
    let (mass, mut system) = assemble(&grid, kappa)?;
    let c = caputo_l1_scale(cfg.alpha, cfg.dt);
    let b = caputo_l1_weights(cfg.alpha, steps.max(1))?;
    system.add_diagonal(&mass, c);
    let factor = system.cholesky()?;

    let n = grid.len();
    let mut states = Vec::with_capacity(steps + 1);
    states.push(cfg.initial.clone().unwrap_or_else(|| vec![0.0; n]));
    // increments[j - 1] = u^j - u^(j-1)
    let mut increments: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut f = vec![0.0; n];
    let mut hist = vec![0.0; n];
    for step in 1..=steps {
        let t = step as f64 * cfg.dt;
        cfg.source.fill(&grid, t, &mut f);
        let prev = &states[step - 1];
        hist.copy_from_slice(prev);
        for k in 1..step {
            let d = &increments[step - k - 1];
            let bk = b[k];
            for (h, di) in hist.iter_mut().zip(d) {
                *h -= bk * di;
            }
        }
        let mut rhs: Vec<f64> = (0..n).map(|p| mass[p] * (f[p] + c * hist[p])).collect();
        factor.solve_in_place(&mut rhs);
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(ModelsError::Solver(format!("non-finite state at step {step}")));
        }
        increments.push(rhs.iter().zip(prev).map(|(u, v)| u - v).collect());
        states.push(rhs);
    }
    Ok(Trajectory { grid, dt: cfg.dt, states })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_weights() {
        let b = caputo_l1_weights(0.5, 4).unwrap();
        assert_eq!(b[0], 1.0);
        assert!((b[1] - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        let b = caputo_l1_weights(1.0 - 1e-12, 5).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-15 && b[1..].iter().all(|v| v.abs() < 1e-11));
        let b = caputo_l1_weights(0.3, 10_000).unwrap();
        assert!(b.windows(2).all(|w| w[0] > w[1]) && *b.last().unwrap() > 0.0);
        assert!(caputo_l1_weights(1.0, 3).is_err());
        assert!(caputo_l1_weights(0.0, 3).is_err());
    }

    #[test]
    fn stiffness_annihilates_constants() {
        let g = Grid2D::new(6, 4).unwrap();
        let kappa: Vec<f64> = g.points().iter().map(|p| 1.0 + p[0] * p[1]).collect();
        let (_, k) = assemble(&g, &kappa).unwrap();
        assert!(k.matvec(&vec![1.0; g.len()]).iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn rejects_bad_kappa_and_alignment() {
        let g = Grid2D::square(3).unwrap();
        let mut kappa = vec![1.0; 9];
        kappa[4] = 0.0;
        assert_eq!(assemble(&g, &kappa).unwrap_err(), ModelsError::NonPositiveKappa { node: 4, value: 0.0 });
        assert!(steps_to(0.25, 0.02).is_err());
        assert_eq!(steps_to(0.75, 0.0125).unwrap(), 60);
    }

    #[test]
    fn zero_source_zero_state() {
        let cfg = TfpdeConfig { grid: Grid2D::square(6).unwrap(), source: Source::Zero, dt: 0.1, ..Default::default() };
        let traj = solve_tfpde(&vec![1.0; 36], &cfg).unwrap();
        assert_eq!(traj.states.len(), 11);
        assert!(traj.states.iter().flatten().all(|&v| v == 0.0));
    }
}
