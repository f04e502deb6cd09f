use serde::{Deserialize, Serialize};

use super::{ModelsError, Trajectory};

/// Sensor layout and read-out times. Observations are flattened
/// location-major: entry `l * times.len() + k` is sensor `l` at time `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSpec {
    pub locations: Vec<[f64; 2]>,
    pub times: Vec<f64>,
}

impl ObservationSpec {
    /// `n x n` sensors on the uniform grid over the closed unit square.
    pub fn uniform_grid(n: usize, times: Vec<f64>) -> Self {
        let tick = |k: usize| if n == 1 { 0.5 } else { k as f64 / (n - 1) as f64 };
        let locations = (0..n).flat_map(|j| (0..n).map(move |i| [tick(i), tick(j)])).collect();
        Self { locations, times }
    }

    pub fn len(&self) -> usize {
        self.locations.len() * self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Bilinear read-out of `traj` at every sensor and time.
pub fn observe(traj: &Trajectory, spec: &ObservationSpec) -> Result<Vec<f64>, ModelsError> {
    let states = spec.times.iter().map(|&t| traj.at_time(t)).collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::with_capacity(spec.len());
    for &x in &spec.locations {
        for s in &states {
            out.push(traj.grid.interpolate(s, x)?);
        }
    }
    Ok(out)
}
