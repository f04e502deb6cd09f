use std::io::{self, Write};

use super::ModelsError;

/// Uniform vertex grid on the unit square, boundary nodes included.
/// Node `(i, j)` sits at `(i * hx, j * hy)` and has flat index `j * nx + i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize) -> Result<Self, ModelsError> {
        if nx < 2 || ny < 2 {
            return Err(ModelsError::Config(format!("grid needs at least 2 nodes per axis, got {nx}x{ny}")));
        }
        Ok(Self { nx, ny })
    }

    pub fn square(n: usize) -> Result<Self, ModelsError> {
        Self::new(n, n)
    }

    /// Grid with every cell split into `factor` x `factor` cells.
    pub fn refined(&self, factor: usize) -> Self {
        Self { nx: (self.nx - 1) * factor + 1, ny: (self.ny - 1) * factor + 1 }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hx(&self) -> f64 {
        1.0 / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        1.0 / (self.ny - 1) as f64
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn point(&self, p: usize) -> [f64; 2] {
        let (i, j) = (p % self.nx, p / self.nx);
        [i as f64 * self.hx(), j as f64 * self.hy()]
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|p| self.point(p)).collect()
    }

    /// Trapezoid-rule quadrature weights; they sum to the domain area 1.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let c = |k: usize, n: usize| if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        let area = self.hx() * self.hy();
        (0..self.len()).map(|p| area * c(p % self.nx, self.nx) * c(p / self.nx, self.ny)).collect()
    }

    /// Bilinear interpolation of nodal `values` at `x`.
    pub fn interpolate(&self, values: &[f64], x: [f64; 2]) -> Result<f64, ModelsError> {
        let tol = 1e-12;
        if !(x[0] >= -tol && x[0] <= 1.0 + tol && x[1] >= -tol && x[1] <= 1.0 + tol) {
            return Err(ModelsError::SensorOutside { x: x[0], y: x[1] });
        }
        let locate = |v: f64, n: usize| {
            let s = (v.clamp(0.0, 1.0)) * (n - 1) as f64;
            let k = (s.floor() as usize).min(n - 2);
            (k, s - k as f64)
        };
        let (i, fx) = locate(x[0], self.nx);
        let (j, fy) = locate(x[1], self.ny);
        let v = |a: usize, b: usize| values[self.index(a, b)];
        Ok((1.0 - fx) * (1.0 - fy) * v(i, j)
            + fx * (1.0 - fy) * v(i + 1, j)
            + (1.0 - fx) * fy * v(i, j + 1)
            + fx * fy * v(i + 1, j + 1))
    }
}

/// Writes nodal values as a plain-text grid: a header line `nx ny h`, then
/// one line per row of constant y, starting at y = 0.
pub fn write_snapshot<W: Write>(w: &mut W, grid: &Grid2D, values: &[f64]) -> io::Result<()> {
    writeln!(w, "{} {} {:e}", grid.nx, grid.ny, grid.hx())?;
    for j in 0..grid.ny {
        let row: Vec<String> = (0..grid.nx).map(|i| format!("{:e}", values[grid.index(i, j)])).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}
