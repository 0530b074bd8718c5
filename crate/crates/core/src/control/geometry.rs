use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::pde::Grid;

/// An interval `(lo₀, hi₀)` or a rectangle `(lo₀, hi₀) × (lo₁, hi₁)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Domain {
    pub fn new(lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != hi.len() || !(1..=2).contains(&lo.len()) {
            return arg("a domain is an interval or a rectangle");
        }
        if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
            return arg("empty domain");
        }
        Ok(Self {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
        })
    }

    pub fn unit(dim: usize) -> Self {
        Self {
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
        }
    }

    /// The domain a grid discretizes.
    pub fn of_grid(grid: &Grid) -> Self {
        Self {
            lo: vec![0.0; grid.dim()],
            hi: grid.extents().to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains_closed(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(a, v)| *v >= self.lo[a] && *v <= self.hi[a])
    }

    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn corners(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..1usize << d)
            .map(|bits| {
                (0..d)
                    .map(|a| {
                        if bits >> a & 1 == 1 {
                            self.hi[a]
                        } else {
                            self.lo[a]
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Lattice of `k` points per axis over the closed domain, corners included.
    fn lattice(&self, k: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let axis =
            |a: usize, i: usize| self.lo[a] + (self.hi[a] - self.lo[a]) * i as f64 / (k - 1) as f64;
        let total = k.pow(d as u32);
        (0..total)
            .map(|idx| (0..d).map(|a| axis(a, idx / k.pow(a as u32) % k)).collect())
            .collect()
    }
}

/// A face of the domain: `axis` and whether it is the upper (`x_axis = hi`) side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Face {
    pub axis: usize,
    pub upper: bool,
}

impl Face {
    fn normal_sign(&self) -> f64 {
        if self.upper {
            1.0
        } else {
            -1.0
        }
    }
}

/// Observed boundary, collar control region and critical time for the multiplier geometry
/// `d(x) = |x - x₀|²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlGeometry {
    pub domain: Domain,
    pub x0: Vec<f64>,
    pub epsilon: f64,
    /// Faces with `(x - x₀)·ν > 0`.
    pub gamma0: Vec<Face>,
    /// Faces with `Σ h^{ij} d_{x_i} ν_j > 0`; equal to `gamma0` for `h = p I`.
    pub gamma_star: Vec<Face>,
    /// Control region as a box `Π (lo_a, hi_a)`.
    pub omega_lo: Vec<f64>,
    pub omega_hi: Vec<f64>,
    /// `ω` is the collar `O_ε(Γ₀) ∩ G` unless replaced by [`ControlGeometry::with_omega`].
    pub omega_is_collar: bool,
    pub t_star: f64,
    pub horizon: f64,
}

/// Builds `Γ₀`, the `ε`-collar `ω` and `T* = 2 max √d` for an exterior point `x₀`.
pub fn make_control_geometry(
    domain: &Domain,
    x0: &[f64],
    epsilon: f64,
    horizon: f64,
) -> Result<ControlGeometry> {
    if x0.len() != domain.dim() {
        return arg("x0 must have one coordinate per axis");
    }
    if domain.contains_closed(x0) {
        return arg(format!("x0 = {x0:?} must lie outside the closed domain"));
    }
    if !(epsilon > 0.0) || !(horizon > 0.0) {
        return arg("epsilon and the horizon must be positive");
    }
    let mut gamma0 = Vec::new();
    for axis in 0..domain.dim() {
        for upper in [false, true] {
            let face = Face { axis, upper };
            let coord = if upper {
                domain.hi[axis]
            } else {
                domain.lo[axis]
            };
            // on an axis-aligned face (x - x₀)·ν = ±(x_axis - x₀_axis) is constant
            if face.normal_sign() * (coord - x0[axis]) > 0.0 {
                gamma0.push(face);
            }
        }
    }
    let t_star = 2.0
        * domain
            .corners()
            .iter()
            .map(|c| dist(c, x0))
            .fold(0.0, f64::max);
    let (omega_lo, omega_hi) = collar(domain, &gamma0, epsilon);
    Ok(ControlGeometry {
        domain: domain.clone(),
        x0: x0.to_vec(),
        epsilon,
        gamma_star: gamma0.clone(),
        gamma0,
        omega_lo,
        omega_hi,
        omega_is_collar: true,
        t_star,
        horizon,
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Bounding box of the collar. In 1D the collar of one endpoint is an interval; in 2D the
/// collar of two adjacent faces is an L-shape, so the mask is evaluated pointwise instead
/// and the box is only its hull.
fn collar(domain: &Domain, faces: &[Face], eps: f64) -> (Vec<f64>, Vec<f64>) {
    let mut lo = domain.hi.clone();
    let mut hi = domain.lo.clone();
    for f in faces {
        for a in 0..domain.dim() {
            let (l, h) = if a == f.axis {
                if f.upper {
                    ((domain.hi[a] - eps).max(domain.lo[a]), domain.hi[a])
                } else {
                    (domain.lo[a], (domain.lo[a] + eps).min(domain.hi[a]))
                }
            } else {
                (domain.lo[a], domain.hi[a])
            };
            lo[a] = lo[a].min(l);
            hi[a] = hi[a].max(h);
        }
    }
    (lo, hi)
}

impl ControlGeometry {
    /// Replaces the control region by the box `Π (lo_a, hi_a)`.
    pub fn with_omega(mut self, lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != self.domain.dim()
            || hi.len() != lo.len()
            || lo.iter().zip(hi).any(|(a, b)| !(a < b))
        {
            return arg("ω must be a non-empty box of the domain's dimension");
        }
        self.omega_lo = lo.to_vec();
        self.omega_hi = hi.to_vec();
        self.omega_is_collar = false;
        Ok(self)
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    /// Whether `x` belongs to `ω` (closed within round-off).
    pub fn in_omega(&self, x: &[f64]) -> bool {
        const TOL: f64 = 1e-12;
        if self.omega_is_collar {
            return self.gamma0.iter().any(|f| {
                let c = if f.upper {
                    self.domain.hi[f.axis]
                } else {
                    self.domain.lo[f.axis]
                };
                (x[f.axis] - c).abs() <= self.epsilon + TOL
            });
        }
        x.iter()
            .enumerate()
            .all(|(a, v)| *v >= self.omega_lo[a] - TOL && *v <= self.omega_hi[a] + TOL)
    }

    /// Indicator of `ω` at the interior nodes of `grid`.
    pub fn mask(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.len())
            .map(|k| {
                if self.in_omega(&grid.point(k)) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// `T > T*`.
    pub fn beyond_critical_time(&self) -> bool {
        self.horizon > self.t_star
    }
}

/// Outcome of the checks on `d(x) = |x - x₀|²` with `h = p I`, `p` constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Constant of the ellipticity item; `4p²` for `h = p I`.
    pub mu0: f64,
    pub mu0_ok: bool,
    pub min_grad: f64,
    pub no_critical_point: bool,
    /// `min ¼ Σ h^{ij} d_{x_i} d_{x_j} - max d` over the closed domain.
    pub condition_iii_margin: f64,
    pub condition_iii_ok: bool,
    /// Smallest `c` with `c·d` meeting the third item, when `∇d` never vanishes.
    pub rescale_factor: Option<f64>,
}

/// Samples the closed domain on a lattice (corners included) and evaluates the three items
/// with the analytic gradient `∇d = 2(x - x₀)`.
pub fn check_assumption_d(domain: &Domain, x0: &[f64], p: f64) -> Result<AssumptionReport> {
    if x0.len() != domain.dim() {
        return arg("x0 must have one coordinate per axis");
    }
    if !(p > 0.0) {
        return arg("the diffusivity must be positive");
    }
    let pts = domain.lattice(if domain.dim() == 1 { 2001 } else { 201 });
    let mut min_grad = f64::INFINITY;
    let mut min_form = f64::INFINITY;
    let mut max_d: f64 = 0.0;
    for x in &pts {
        let r2: f64 = x.iter().zip(x0).map(|(a, b)| (a - b).powi(2)).sum();
        min_grad = min_grad.min(2.0 * r2.sqrt());
        min_form = min_form.min(0.25 * p * 4.0 * r2);
        max_d = max_d.max(r2);
    }
    let mu0 = 4.0 * p * p;
    let margin = min_form - max_d;
    let no_critical_point = min_grad > 0.0;
    Ok(AssumptionReport {
        mu0,
        mu0_ok: mu0 > 0.0,
        min_grad,
        no_critical_point,
        condition_iii_margin: margin,
        condition_iii_ok: margin >= 0.0,
        rescale_factor: no_critical_point.then(|| (max_d / min_form).max(1.0)),
    })
}
