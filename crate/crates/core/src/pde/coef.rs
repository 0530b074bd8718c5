use std::fmt;
use std::sync::Arc;

use super::grid::Grid;
use crate::error::{arg, Result};

pub type SpaceFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(f64, &[f64]) -> [f64; 2] + Send + Sync>;

/// Coefficients of the model equations
///
/// `y_t - ∇·(p∇y) = a y + a₁·∇y + χ u` (heat), `y_tt - ∇·(p∇y) + b y_t = a y + a₁·∇y + χ u`
/// (wave), with noise `c y dB` (heat) or `(c y + g) dB` (wave).
#[derive(Clone)]
pub struct CoefficientField {
    pub(crate) diffusivity: SpaceFn,
    pub(crate) potential: SpaceTimeFn,
    pub(crate) convection: Option<VectorFn>,
    pub(crate) damping: SpaceFn,
    pub(crate) noise: SpaceFn,
    pub(crate) noise_source: SpaceFn,
    pub(crate) mask: SpaceFn,
    time_dependent: bool,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("convection", &self.convection.is_some())
            .field("time_dependent", &self.time_dependent)
            .finish_non_exhaustive()
    }
}

impl Default for CoefficientField {
    fn default() -> Self {
        Self::laplacian()
    }
}

impl CoefficientField {
    /// `p = 1`, every other coefficient zero, mask equal to one everywhere.
    pub fn laplacian() -> Self {
        Self {
            diffusivity: Arc::new(|_| 1.0),
            potential: Arc::new(|_, _| 0.0),
            convection: None,
            damping: Arc::new(|_| 0.0),
            noise: Arc::new(|_| 0.0),
            noise_source: Arc::new(|_| 0.0),
            mask: Arc::new(|_| 1.0),
            time_dependent: false,
        }
    }

    pub fn with_diffusivity(mut self, p: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.diffusivity = Arc::new(p);
        self
    }

    pub fn with_constant_potential(self, a: f64) -> Self {
        self.with_potential(move |_| a)
    }

    pub fn with_potential(mut self, a: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.potential = Arc::new(move |_, x| a(x));
        self
    }

    pub fn with_time_potential(
        mut self,
        a: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.potential = Arc::new(a);
        self.time_dependent = true;
        self
    }

    pub fn with_convection(
        mut self,
        a1: impl Fn(f64, &[f64]) -> [f64; 2] + Send + Sync + 'static,
    ) -> Self {
        self.convection = Some(Arc::new(a1));
        self.time_dependent = true;
        self
    }

    pub fn with_damping(mut self, b: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.damping = Arc::new(b);
        self
    }

    pub fn with_noise(mut self, c: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.noise = Arc::new(c);
        self
    }

    pub fn with_noise_source(mut self, g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.noise_source = Arc::new(g);
        self
    }

    pub fn with_mask(mut self, chi: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.mask = Arc::new(chi);
        self
    }

    /// Mask of the box `Π (lo_a, hi_a)`; nodes on the box boundary count as inside.
    pub fn with_mask_box(self, lo: &[f64], hi: &[f64]) -> Self {
        let (lo, hi) = (lo.to_vec(), hi.to_vec());
        self.with_mask(move |x| {
            let inside = x
                .iter()
                .enumerate()
                .all(|(a, v)| *v >= lo[a] - 1e-12 && *v <= hi[a] + 1e-12);
            if inside {
                1.0
            } else {
                0.0
            }
        })
    }

    pub fn with_mask_values(self, grid: &Grid, values: Vec<f64>) -> Self {
        let g = *grid;
        self.with_mask(move |x| {
            let k = (0..g.dim()).rev().fold(0, |acc, a| {
                acc * g.n()[a] + ((x[a] / g.h()[a]).round() as usize).saturating_sub(1)
            });
            values.get(k).copied().unwrap_or(0.0)
        })
    }

    /// Whether the potential or convection may change in time.
    pub fn is_time_dependent(&self) -> bool {
        self.time_dependent
    }

    pub fn diffusivity_at(&self, x: &[f64]) -> f64 {
        (self.diffusivity)(x)
    }

    pub fn potential_at(&self, t: f64, x: &[f64]) -> f64 {
        (self.potential)(t, x)
    }

    pub fn damping_at(&self, x: &[f64]) -> f64 {
        (self.damping)(x)
    }

    pub fn noise_at(&self, x: &[f64]) -> f64 {
        (self.noise)(x)
    }

    pub fn mask_values(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.len())
            .map(|k| (self.mask)(&grid.point(k)))
            .collect()
    }

    pub fn noise_values(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.len())
            .map(|k| (self.noise)(&grid.point(k)))
            .collect()
    }

    pub fn noise_source_values(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.len())
            .map(|k| (self.noise_source)(&grid.point(k)))
            .collect()
    }

    pub fn damping_values(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.len())
            .map(|k| (self.damping)(&grid.point(k)))
            .collect()
    }

    /// Checks `p > 0` at every node and half-node, `b ≥ 0`, and a 0/1 mask.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        for k in 0..grid.len() {
            let x = grid.point(k);
            let p = (self.diffusivity)(&x);
            if !(p > 0.0 && p.is_finite()) {
                return arg(format!("non-positive diffusivity {p} at {x:?}"));
            }
            let b = (self.damping)(&x);
            if !(b >= 0.0) {
                return arg(format!("negative damping {b} at {x:?}"));
            }
            let m = (self.mask)(&x);
            if m != 0.0 && m != 1.0 {
                return arg(format!("mask value {m} at {x:?} is not 0 or 1"));
            }
        }
        for x in boundary_points(grid) {
            let p = (self.diffusivity)(&x);
            if !(p > 0.0 && p.is_finite()) {
                return arg(format!("non-positive diffusivity {p} at {x:?}"));
            }
        }
        Ok(())
    }

    /// Diffusivity on the edge between two points: harmonic mean of the endpoint values.
    pub(crate) fn edge_diffusivity(&self, a: &[f64], b: &[f64]) -> f64 {
        let pa = (self.diffusivity)(a);
        let pb = (self.diffusivity)(b);
        2.0 * pa * pb / (pa + pb)
    }
}

fn boundary_points(grid: &Grid) -> Vec<Vec<f64>> {
    let ext = grid.extents();
    match grid.dim() {
        1 => vec![vec![0.0], vec![ext[0]]],
        _ => {
            let mut pts = Vec::new();
            for k in 0..grid.n()[0] {
                let x = grid.coords(grid.index(k, 0))[0];
                pts.push(vec![x, 0.0]);
                pts.push(vec![x, ext[1]]);
            }
            for k in 0..grid.n()[1] {
                let y = grid.coords(grid.index(0, k))[1];
                pts.push(vec![0.0, y]);
                pts.push(vec![ext[0], y]);
            }
            pts
        }
    }
}
