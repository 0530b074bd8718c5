use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};

/// Uniform grid on `(0, L)` or `(0, Lx) × (0, Ly)` with Dirichlet boundary, plus a uniform time grid.
///
/// Interior nodes sit at `x_i = (i + 1) h`, `i = 0..n`, and are numbered with the first axis
/// fastest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    extents: [f64; 2],
    n: [usize; 2],
    h: [f64; 2],
    dt: f64,
    steps: usize,
}

impl Grid {
    pub fn new(extents: &[f64], n: &[usize], horizon: f64, steps: usize) -> Result<Self> {
        let dim = extents.len();
        if !(1..=2).contains(&dim) || n.len() != dim {
            return arg("grids are one- or two-dimensional with one point count per axis");
        }
        if n.iter().any(|&k| k < 3) {
            return arg("need at least 3 interior points per axis");
        }
        if extents.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return arg("extents must be positive");
        }
        if steps == 0 || !(horizon > 0.0 && horizon.is_finite()) {
            return arg("need a positive horizon and at least one time step");
        }
        let mut e = [1.0; 2];
        let mut nn = [1; 2];
        let mut h = [1.0; 2];
        for a in 0..dim {
            e[a] = extents[a];
            nn[a] = n[a];
            h[a] = extents[a] / (n[a] + 1) as f64;
        }
        Ok(Self {
            dim,
            extents: e,
            n: nn,
            h,
            dt: horizon / steps as f64,
            steps,
        })
    }

    /// `(0, 1)` with `n` interior points.
    pub fn unit_interval(n: usize, horizon: f64, steps: usize) -> Result<Self> {
        Self::new(&[1.0], &[n], horizon, steps)
    }

    /// `(0, 1)²` with `n × n` interior points.
    pub fn unit_square(n: usize, horizon: f64, steps: usize) -> Result<Self> {
        Self::new(&[1.0, 1.0], &[n, n], horizon, steps)
    }

    /// The same spatial grid with another time discretization.
    pub fn with_time(&self, horizon: f64, steps: usize) -> Result<Self> {
        Self::new(
            &self.extents[..self.dim],
            &self.n[..self.dim],
            horizon,
            steps,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents[..self.dim]
    }

    pub fn n(&self) -> &[usize] {
        &self.n[..self.dim]
    }

    pub fn h(&self) -> &[f64] {
        &self.h[..self.dim]
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon()
        } else {
            k as f64 * self.dt
        }
    }

    /// Number of interior nodes.
    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Measure of one grid cell, the weight of the discrete `L²` inner product.
    pub fn cell(&self) -> f64 {
        self.h[0] * if self.dim == 2 { self.h[1] } else { 1.0 }
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.n[0] * j
    }

    /// Coordinates of node `k` (unused second coordinate is 0 in 1D).
    pub fn coords(&self, k: usize) -> [f64; 2] {
        let i = k % self.n[0];
        let j = k / self.n[0];
        let y = if self.dim == 2 {
            (j + 1) as f64 * self.h[1]
        } else {
            0.0
        };
        [(i + 1) as f64 * self.h[0], y]
    }

    pub fn point(&self, k: usize) -> Vec<f64> {
        self.coords(k)[..self.dim].to_vec()
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.cell() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).sqrt()
    }

    /// Samples `f` at the interior nodes.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> GridFunction {
        let values = (0..self.len()).map(|k| f(&self.point(k))).collect();
        GridFunction {
            grid: *self,
            values,
        }
    }

    pub fn zeros(&self) -> GridFunction {
        GridFunction {
            grid: *self,
            values: vec![0.0; self.len()],
        }
    }

    /// The `L²`-normalized Dirichlet eigenfunction with wave numbers `k` (one per axis).
    pub fn dirichlet_mode(&self, k: &[usize]) -> GridFunction {
        let ext = self.extents;
        let dim = self.dim;
        let k = k.to_vec();
        self.sample(move |x| {
            (0..dim)
                .map(|a| {
                    (2.0 / ext[a]).sqrt()
                        * (k[a] as f64 * std::f64::consts::PI * x[a] / ext[a]).sin()
                })
                .product()
        })
    }

    /// Continuum Dirichlet eigenvalue `Σ (k_a π / L_a)²` of `-Δ`.
    pub fn dirichlet_eigenvalue(&self, k: &[usize]) -> f64 {
        (0..self.dim)
            .map(|a| (k[a] as f64 * std::f64::consts::PI / self.extents[a]).powi(2))
            .sum()
    }
}

/// Values at the interior nodes of a grid; boundary values are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return arg(format!(
                "{} values for a grid with {} nodes",
                values.len(),
                grid.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return arg("grid function has a non-finite value");
        }
        Ok(Self { grid, values })
    }

    pub fn norm(&self) -> f64 {
        self.grid.norm(&self.values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_and_indexing() {
        let g = Grid::new(&[2.0, 1.0], &[3, 4], 1.0, 10).unwrap();
        assert_eq!(g.len(), 12);
        assert_eq!(g.h(), &[0.5, 0.2]);
        assert_eq!(g.coords(g.index(2, 1)), [1.5, 0.4]);
        assert!((g.dt() * g.steps() as f64 - g.horizon()).abs() < 1e-15);
        assert!(Grid::unit_interval(2, 1.0, 1).is_err());
    }

    #[test]
    fn modes_are_normalized() {
        let g = Grid::unit_square(40, 1.0, 1).unwrap();
        let m = g.dirichlet_mode(&[1, 2]);
        assert!((m.norm() - 1.0).abs() < 1e-12);
    }
}
