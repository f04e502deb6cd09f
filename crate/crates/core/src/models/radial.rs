/// Sum of isotropic Gaussian bumps with nonnegative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialBasisField {
    pub centers: Vec<[f64; 2]>,
    pub width: f64,
}

impl Default for RadialBasisField {
    /// Nine bumps of width 0.15 centred on {0.25, 0.5, 0.75}^2.
    fn default() -> Self {
        let ticks = [0.25, 0.5, 0.75];
        let centers = ticks.iter().flat_map(|&y| ticks.iter().map(move |&x| [x, y])).collect();
        Self { centers, width: 0.15 }
    }
}

impl RadialBasisField {
    pub fn dim(&self) -> usize {
        self.centers.len()
    }

    /// Value of each bump at `x`.
    pub fn features(&self, x: [f64; 2]) -> Vec<f64> {
        let s = 0.5 / (self.width * self.width);
        self.centers
            .iter()
            .map(|c| (-s * ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2))).exp())
            .collect()
    }

    pub fn kappa(&self, weights: &[f64], x: [f64; 2]) -> f64 {
        self.features(x).iter().zip(weights).map(|(f, w)| f * w).sum()
    }
}
