use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::ampc::AmpcConfig;
use crate::eki::{EkiConfig, NoiseLevel};
use crate::prior::Marginal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    /// Nine radial bumps, log-normal weights, truth far outside the prior.
    Example1,
    /// As example1 with the truth drawn from the prior.
    Example2,
    /// Log-normal field with a truncated KL expansion.
    Example3,
    /// f(theta) = A theta with a random Gaussian operator.
    LinearGaussian,
    /// Diffusion problem with every setting taken from the config.
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    /// Radial bumps with log-normal weights (the latent parameter is log theta).
    RadialLog,
    /// Radial bumps with the weights as parameters.
    Radial,
    Kl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    /// Solver nodes per axis.
    #[serde(default = "defaults::grid")]
    pub grid: usize,
    #[serde(default = "defaults::dt")]
    pub dt: f64,
    #[serde(default = "defaults::order")]
    pub order: f64,
    #[serde(default = "defaults::t_final")]
    pub t_final: f64,
    /// Refinement of the data-generating solve in space and time.
    #[serde(default = "defaults::fine_factor")]
    pub fine_factor: usize,
    /// Field parameterization for `custom`.
    pub field: Option<FieldKind>,
    /// KL truncation: a fixed number of modes, or an energy fraction.
    pub modes: Option<usize>,
    pub energy: Option<f64>,
    /// KL quadrature grid per axis; the solver grid when absent.
    pub kl_grid: Option<usize>,
    /// Parameter and observation dimensions of `linear-gaussian`.
    pub dim: Option<usize>,
    pub outputs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TruthConfig {
    DrawFromPrior,
    Explicit { values: Vec<f64> },
    /// Each coordinate uniform on [lo, hi], independent of the prior.
    OutOfPriorUniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    /// n x n sensors over the closed unit square.
    pub sensors: Option<usize>,
    /// Explicit sensor coordinates, used instead of `sensors`.
    pub locations: Option<Vec<[f64; 2]>>,
    #[serde(default = "defaults::times")]
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MethodConfig {
    /// Smoother on the forward model itself.
    Direct,
    /// Smoother on a fixed prior surrogate.
    Pc {
        degree: usize,
        q1: Option<usize>,
    },
    /// Smoother on an adaptively refined multi-fidelity surrogate.
    Ampc {
        degree: usize,
        correction_degree: Option<usize>,
        tol: f64,
        #[serde(default = "defaults::radius")]
        radius: f64,
        #[serde(default = "defaults::oversampling")]
        oversampling: usize,
        q1: Option<usize>,
        q2: Option<usize>,
    },
}

impl MethodConfig {
    pub fn name(&self) -> &'static str {
        match self {
            MethodConfig::Direct => "direct",
            MethodConfig::Pc { .. } => "pc",
            MethodConfig::Ampc { .. } => "ampc",
        }
    }

    /// Human-readable label including the degree, e.g. `PC (N=4)`.
    pub fn label(&self) -> String {
        match self {
            MethodConfig::Direct => "Direct".into(),
            MethodConfig::Pc { degree, .. } => format!("PC (N={degree})"),
            MethodConfig::Ampc { degree, correction_degree, tol, .. } => {
                format!("AMPC (N={degree}, N_C={}, tol={tol:e})", correction_degree.unwrap_or(*degree))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseLevelConfig {
    /// The realized ||Gamma^{-1/2} xi|| of the synthetic data.
    Realized,
    /// sqrt(m).
    Expected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EkiSection {
    #[serde(default = "defaults::ensemble_size")]
    pub ensemble_size: usize,
    #[serde(default = "defaults::rho")]
    pub rho: f64,
    /// Defaults to 1 / rho.
    pub tau: Option<f64>,
    #[serde(default = "defaults::max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "defaults::alpha0")]
    pub alpha0: f64,
    #[serde(default = "defaults::noise_level")]
    pub noise_level: NoiseLevelConfig,
}

impl Default for EkiSection {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "defaults::repeats")]
    pub repeats: usize,
    /// Repeat r uses seed + r for its ensemble, perturbations and surrogate samples.
    #[serde(default)]
    pub seed: u64,
    /// Seed of the truth, operator and noise draws; `seed` when absent.
    pub data_seed: Option<u64>,
    /// Record wall time in trace CSVs. Off by default so traces are reproducible byte for byte.
    #[serde(default)]
    pub trace_timing: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

impl RunSection {
    pub fn data_seed(&self) -> u64 {
        self.data_seed.unwrap_or(self.seed)
    }
}

/// A full experiment: problem, data, method and repeat protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    /// Prior marginals; problem default when absent.
    pub prior: Option<Vec<Marginal>>,
    pub truth: Option<TruthConfig>,
    pub noise: Option<NoiseConfig>,
    pub observation: Option<ObservationConfig>,
    pub method: MethodConfig,
    #[serde(default)]
    pub eki: EkiSection,
    #[serde(default)]
    pub run: RunSection,
}

mod defaults {
    use super::NoiseLevelConfig;

    pub fn grid() -> usize {
        41
    }
    pub fn dt() -> f64 {
        0.01
    }
    pub fn order() -> f64 {
        0.5
    }
    pub fn t_final() -> f64 {
        1.0
    }
    pub fn fine_factor() -> usize {
        2
    }
    pub fn times() -> Vec<f64> {
        vec![0.25, 0.75, 1.0]
    }
    pub fn radius() -> f64 {
        0.2
    }
    pub fn oversampling() -> usize {
        2
    }
    pub fn ensemble_size() -> usize {
        100
    }
    pub fn rho() -> f64 {
        0.7
    }
    pub fn max_iterations() -> usize {
        30
    }
    pub fn alpha0() -> f64 {
        1.0
    }
    pub fn noise_level() -> NoiseLevelConfig {
        NoiseLevelConfig::Realized
    }
    pub fn repeats() -> usize {
        50
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        Self::from_toml_with(text, &[])
    }

    /// Parses `text` after applying `key.path=value` overrides. Values are
    /// read as TOML, falling back to a bare string.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self, HarnessError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_with(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.run.repeats == 0 {
            return bad("run.repeats must be at least 1".into());
        }
        if let Some(n) = &self.noise {
            if !(n.sigma > 0.0) {
                return bad(format!("noise.sigma must be positive, got {}", n.sigma));
            }
        }
        if self.problem.modes.is_some() && self.problem.energy.is_some() {
            return bad("set at most one of problem.modes and problem.energy".into());
        }
        if self.problem.kind == ProblemKind::Custom && self.problem.field.is_none() {
            return bad("problem.field is required for custom problems".into());
        }
        self.eki_config(0).validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if let Some(a) = self.ampc_config(0) {
            a.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Smoother settings for repeat seed `seed`; the noise level is filled in
    /// once the data are known.
    pub fn eki_config(&self, seed: u64) -> EkiConfig {
        let e = &self.eki;
        EkiConfig {
            ensemble_size: e.ensemble_size,
            rho: e.rho,
            tau: e.tau.unwrap_or(1.0 / e.rho),
            max_iterations: e.max_iterations,
            alpha0: e.alpha0,
            noise_level: NoiseLevel::Default,
            seed,
        }
    }

    pub fn ampc_config(&self, seed: u64) -> Option<AmpcConfig> {
        match self.method {
            MethodConfig::Ampc { degree, correction_degree, tol, radius, oversampling, q1, q2 } => Some(AmpcConfig {
                degree,
                correction_degree: correction_degree.unwrap_or(degree),
                tol,
                radius,
                oversampling,
                q1,
                q2,
                eki: self.eki_config(seed),
            }),
            _ => None,
        }
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), HarnessError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override `{item}` is not of the form key=value")))?;
    let value: toml::Value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| HarnessError::Config(format!("override `{key}`: `{p}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[problem]
kind = "example1"
grid = 21

[method]
kind = "ampc"
degree = 2
tol = 1e-3

[run]
repeats = 3
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(c.eki.ensemble_size, 100);
        assert_eq!(c.problem.dt, 0.01);
        let a = c.ampc_config(7).unwrap();
        assert_eq!((a.degree, a.correction_degree, a.radius, a.eki.seed), (2, 2, 0.2, 7));
        assert_eq!(a.eki.tau, 1.0 / 0.7);
    }

    #[test]
    fn rejects_unknown_and_misplaced_keys() {
        assert!(ExperimentConfig::from_toml(&format!("{BASE}\n[eki]\nensemble = 4\n")).is_err());
        let pc_with_tol = BASE.replace("kind = \"ampc\"", "kind = \"pc\"");
        let err = ExperimentConfig::from_toml(&pc_with_tol).unwrap_err();
        assert!(err.to_string().contains("tol"), "{err}");
    }

    #[test]
    fn overrides_apply() {
        let c = ExperimentConfig::from_toml_with(
            BASE,
            &["method.tol=inf".into(), "eki.ensemble_size = 50".into(), "problem.kind=example2".into()],
        )
        .unwrap();
        assert!(matches!(c.method, MethodConfig::Ampc { tol, .. } if tol.is_infinite()));
        assert_eq!(c.eki.ensemble_size, 50);
        assert_eq!(c.problem.kind, ProblemKind::Example2);
        assert!(ExperimentConfig::from_toml_with(BASE, &["nonsense".into()]).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }
}
