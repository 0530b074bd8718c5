//! Implicit-midpoint solver for the damped wave equation.
//!
//! Semi-discretely `M q'' + C q' + S q = M χ u` with lumped mass `M`, `S = K - M diag(a)`
//! and diagonal damping `C`. One step of the midpoint rule is
//!
//! `G v^{n+1} = H v^n - dt S q^n + dt M χ u^n`,  `q^{n+1} = q^n + dt/2 (v^n + v^{n+1})`
//!
//! with `G = M + dt/2 C + dt²/4 S` and `H = M - dt/2 C - dt²/4 S`. The discrete energy
//! `½ vᵀMv + ½ qᵀSq` is conserved to round-off when `C = 0` and `u = 0`.

use rayon::prelude::*;

use super::coef::CoefficientField;
use super::grid::{Grid, GridFunction};
use super::heat::path_increments;
use super::ops::{mass, stiffness, DofLayout};
use super::Trajectory;
use crate::error::{arg, Result};
use crate::linalg::{BandLu, BandMatrix};

/// How the wave equation dissipates energy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Damping {
    None,
    /// `b(x) y_t` with `b` taken from the coefficient field.
    Interior,
    /// `∂_ν y + a y_t = 0` at the endpoints of a 1D interval. `Some(a)` turns the endpoint
    /// into an unknown with that gain (`a = 0` is a Neumann end); `None` keeps it Dirichlet.
    Boundary {
        left: Option<f64>,
        right: Option<f64>,
    },
}

/// A scalar nonlinearity `f(s)`, entering the energy through `∫₀ʸ f(s) ds`.
pub type Nonlinearity = dyn Fn(f64) -> f64 + Sync;

/// Assembled midpoint scheme for one grid and time step.
pub struct WaveSystem {
    grid: Grid,
    layout: DofLayout,
    mass: Vec<f64>,
    s: BandMatrix,
    damping: Vec<f64>,
    h: BandMatrix,
    g: BandLu,
    mask: Vec<f64>,
}

impl WaveSystem {
    pub fn new(coef: &CoefficientField, grid: &Grid, damping: Damping) -> Result<Self> {
        coef.validate(grid)?;
        if coef.convection.is_some() {
            return arg("the wave solver does not take a convection field");
        }
        let layout = match damping {
            Damping::Boundary { left, right } => {
                if grid.dim() != 1 {
                    return arg("boundary damping is implemented on intervals only");
                }
                if left.is_some_and(|a| !(a >= 0.0)) || right.is_some_and(|a| !(a >= 0.0)) {
                    return arg("boundary damping gains must be non-negative");
                }
                DofLayout {
                    interior: grid.len(),
                    left: left.is_some(),
                    right: right.is_some(),
                }
            }
            _ => DofLayout::interior_only(grid),
        };
        let m = mass(grid, &layout);
        let k = stiffness(grid, coef, &layout);
        let mut s = k.clone();
        let off = layout.offset();
        for i in 0..grid.len() {
            let a = coef.potential_at(0.0, &grid.point(i));
            s.add(off + i, off + i, -m[off + i] * a);
        }
        let mut c = vec![0.0; layout.len()];
        match damping {
            Damping::None => {}
            Damping::Interior => {
                for (i, b) in coef.damping_values(grid).into_iter().enumerate() {
                    c[off + i] = m[off + i] * b;
                }
            }
            Damping::Boundary { left, right } => {
                if let Some(a) = left {
                    c[0] = a;
                }
                if let Some(a) = right {
                    c[layout.len() - 1] = a;
                }
            }
        }
        let dt = grid.dt();
        let mut diag = BandMatrix::zeros(layout.len(), s.bandwidth());
        for i in 0..layout.len() {
            diag.add(i, i, m[i]);
        }
        let mut cd = BandMatrix::zeros(layout.len(), s.bandwidth());
        for (i, ci) in c.iter().enumerate() {
            cd.add(i, i, *ci);
        }
        let gm = diag
            .combine(1.0, &cd, 0.5 * dt)
            .combine(1.0, &s, 0.25 * dt * dt);
        let h = diag
            .combine(1.0, &cd, -0.5 * dt)
            .combine(1.0, &s, -0.25 * dt * dt);
        let g = BandLu::factor(&gm)?;
        let mask = layout.embed(&coef.mask_values(grid));
        Ok(Self {
            grid: *grid,
            layout,
            mass: m,
            s,
            damping: c,
            h,
            g,
            mask,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn layout(&self) -> &DofLayout {
        &self.layout
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// `S = K - M diag(a)`.
    pub fn stiffness(&self) -> &BandMatrix {
        &self.s
    }

    /// Diagonal of the damping matrix `C`.
    pub fn damping(&self) -> &[f64] {
        &self.damping
    }

    /// Control mask on the unknowns (zero at boundary unknowns).
    pub fn mask(&self) -> &[f64] {
        &self.mask
    }

    /// Discrete energy `½ vᵀMv + ½ qᵀSq`.
    pub fn energy(&self, q: &[f64], v: &[f64]) -> f64 {
        let sq = self.s.matvec(q);
        let kin: f64 = v.iter().zip(&self.mass).map(|(x, m)| m * x * x).sum();
        let pot: f64 = q.iter().zip(&sq).map(|(a, b)| a * b).sum();
        0.5 * (kin + pot)
    }

    /// Energy inner product `q₁ᵀ S q₂ + v₁ᵀ M v₂` on stacked pairs `(q, v)`.
    pub fn energy_inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = self.layout.len();
        let sb = self.s.matvec(&b[..n]);
        let pot: f64 = a[..n].iter().zip(&sb).map(|(x, y)| x * y).sum();
        let kin: f64 = a[n..]
            .iter()
            .zip(&b[n..])
            .zip(&self.mass)
            .map(|((x, y), m)| m * x * y)
            .sum();
        pot + kin
    }

    /// One step with an extra right-hand side added to `G v^{n+1} = …` (already carrying the
    /// factor `dt M` where applicable).
    pub fn step(&self, q: &[f64], v: &[f64], rhs: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
        let dt = self.grid.dt();
        let mut r = self.h.matvec(v);
        let sq = self.s.matvec(q);
        for i in 0..r.len() {
            r[i] -= dt * sq[i];
        }
        if let Some(f) = rhs {
            for (ri, fi) in r.iter_mut().zip(f) {
                *ri += fi;
            }
        }
        self.g.solve(&mut r);
        let q1 = q
            .iter()
            .zip(v)
            .zip(&r)
            .map(|((a, b), c)| a + 0.5 * dt * (b + c))
            .collect();
        (q1, r)
    }

    /// `dt M χ u` for interior control values `u`.
    pub fn control_rhs(&self, u: &[f64]) -> Vec<f64> {
        let u = self.layout.embed(u);
        let dt = self.grid.dt();
        u.iter()
            .zip(&self.mask)
            .zip(&self.mass)
            .map(|((x, c), m)| dt * m * c * x)
            .collect()
    }

    /// Transposed step on Euclidean cotangents `(λ_q, λ_v)` of `(q^{n+1}, v^{n+1})`. Returns
    /// the cotangents of `(q^n, v^n)` and the stage `r̄ = G^{-1}(λ_v + dt/2 λ_q)`; the
    /// cotangent of the right-hand side is `r̄`.
    pub fn adjoint_step(&self, lq: &[f64], lv: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let dt = self.grid.dt();
        let mut rbar: Vec<f64> = lv.iter().zip(lq).map(|(a, b)| a + 0.5 * dt * b).collect();
        self.g.solve_transpose(&mut rbar);
        let srb = self.s.matvec_transpose(&rbar);
        let hrb = self.h.matvec_transpose(&rbar);
        let lq0 = lq.iter().zip(&srb).map(|(a, b)| a - dt * b).collect();
        let lv0 = lq.iter().zip(&hrb).map(|(a, b)| 0.5 * dt * a + b).collect();
        (lq0, lv0, rbar)
    }

    /// Runs all steps, calling `rhs(n, q^n, v^n)` for the extra right-hand side of step `n`.
    pub fn solve_with(
        &self,
        q0: Vec<f64>,
        v0: Vec<f64>,
        mut rhs: impl FnMut(usize, &[f64], &[f64]) -> Option<Vec<f64>>,
    ) -> Result<Trajectory> {
        let n = self.layout.len();
        if q0.len() != n || v0.len() != n {
            return arg(format!("wave data must have {n} unknowns"));
        }
        let steps = self.grid.steps();
        let mut qs = Vec::with_capacity(steps + 1);
        let mut vs = Vec::with_capacity(steps + 1);
        qs.push(q0);
        vs.push(v0);
        for k in 0..steps {
            let f = rhs(k, &qs[k], &vs[k]);
            let (q1, v1) = self.step(&qs[k], &vs[k], f.as_deref());
            qs.push(q1);
            vs.push(v1);
        }
        Ok(Trajectory {
            grid: self.grid,
            layout: self.layout,
            states: qs,
            velocities: Some(vs),
            stages: None,
            blow_up_step: None,
        })
    }

    /// Solves from interior data with an optional interior control per step.
    pub fn solve(
        &self,
        y0: &[f64],
        y1: &[f64],
        control: Option<&[Vec<f64>]>,
    ) -> Result<Trajectory> {
        let steps = self.grid.steps();
        if y0.len() != self.grid.len() || y1.len() != self.grid.len() {
            return arg("initial data does not match the grid");
        }
        if control.is_some_and(|c| c.len() != steps || c.iter().any(|u| u.len() != self.grid.len()))
        {
            return arg(format!(
                "control must have {steps} snapshots of {} values",
                self.grid.len()
            ));
        }
        self.solve_with(self.layout.embed(y0), self.layout.embed(y1), |n, _, _| {
            control.map(|c| self.control_rhs(&c[n]))
        })
    }
}

/// Solves the (damped, controlled) wave equation from `(y0, y1)`.
pub fn solve_wave(
    coef: &CoefficientField,
    grid: &Grid,
    y0: &GridFunction,
    y1: &GridFunction,
    control: Option<&[Vec<f64>]>,
    damping: Damping,
) -> Result<Trajectory> {
    WaveSystem::new(coef, grid, damping)?.solve(&y0.values, &y1.values, control)
}

/// Discrete energy at every snapshot, plus `Σ M_i ∫₀^{y_i} f` when a nonlinearity is given.
///
/// The primitive of `f` is evaluated by adaptive Simpson quadrature at each node.
pub fn wave_energy(
    traj: &Trajectory,
    coef: &CoefficientField,
    f: Option<&Nonlinearity>,
) -> Result<Vec<f64>> {
    let Some(vel) = &traj.velocities else {
        return arg("energy needs a wave trajectory with velocities");
    };
    let grid = &traj.grid;
    let layout = &traj.layout;
    let m = mass(grid, layout);
    let mut s = stiffness(grid, coef, layout);
    let off = layout.offset();
    for i in 0..grid.len() {
        s.add(
            off + i,
            off + i,
            -m[off + i] * coef.potential_at(0.0, &grid.point(i)),
        );
    }
    Ok(traj
        .states
        .iter()
        .zip(vel)
        .map(|(q, v)| {
            let sq = s.matvec(q);
            let kin: f64 = v.iter().zip(&m).map(|(x, w)| w * x * x).sum();
            let pot: f64 = q.iter().zip(&sq).map(|(a, b)| a * b).sum();
            let nl: f64 = f.map_or(0.0, |f| {
                q.iter().zip(&m).map(|(y, w)| w * primitive(f, *y)).sum()
            });
            0.5 * (kin + pot) + nl
        })
        .collect())
}

/// `∫₀ʸ f(s) ds` by adaptive Simpson quadrature.
pub fn primitive(f: &Nonlinearity, y: f64) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    let fa = f(0.0);
    let fb = f(y);
    let fm = f(0.5 * y);
    let whole = y / 6.0 * (fa + 4.0 * fm + fb);
    simpson(
        f,
        0.0,
        y,
        fa,
        fm,
        fb,
        whole,
        1e-13 * (1.0 + whole.abs()),
        40,
    )
}

#[allow(clippy::too_many_arguments)]
fn simpson(
    f: &Nonlinearity,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// One path of `dz = z_t dt`, `dz_t = (∇·(p∇z) - b z_t + a z) dt + (c z + g) dB`: the drift
/// by the midpoint scheme, the Itô increment `M (c zⁿ + g) ΔBₙ` added explicitly to the
/// velocity equation.
pub fn stoch_wave_path(
    sys: &WaveSystem,
    coef: &CoefficientField,
    z0: &[f64],
    z1: &[f64],
    increments: &[f64],
) -> Result<Trajectory> {
    let grid = *sys.grid();
    if increments.len() != grid.steps() {
        return arg("one Brownian increment per time step is required");
    }
    let layout = *sys.layout();
    let c = layout.embed(&coef.noise_values(&grid));
    let g = layout.embed(&coef.noise_source_values(&grid));
    let noisy = c.iter().chain(&g).any(|v| *v != 0.0);
    sys.solve_with(layout.embed(z0), layout.embed(z1), |n, q, _| {
        noisy.then(|| {
            (0..q.len())
                .map(|i| sys.mass()[i] * (c[i] * q[i] + g[i]) * increments[n])
                .collect()
        })
    })
}

/// Maps every path of a stochastic wave ensemble through `f`, in path order.
pub fn stoch_wave_map<T: Send>(
    coef: &CoefficientField,
    grid: &Grid,
    z0: &GridFunction,
    z1: &GridFunction,
    seed: u64,
    n_paths: usize,
    f: impl Fn(&Trajectory) -> T + Sync,
) -> Result<Vec<T>> {
    if n_paths == 0 {
        return arg("need at least one path");
    }
    let damped = coef.damping_values(grid).iter().any(|b| *b != 0.0);
    let sys = WaveSystem::new(
        coef,
        grid,
        if damped {
            Damping::Interior
        } else {
            Damping::None
        },
    )?;
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let inc = path_increments(seed, i, grid.dt(), grid.steps());
            stoch_wave_path(&sys, coef, &z0.values, &z1.values, &inc).map(|t| f(&t))
        })
        .collect()
}

/// Ensemble of stochastic wave trajectories; `b` of the coefficient field plays `-a₁`, the
/// noise gain `c` plays `a₄` and the noise source plays `g`.
pub fn solve_stoch_wave(
    coef: &CoefficientField,
    grid: &Grid,
    z0: &GridFunction,
    z1: &GridFunction,
    seed: u64,
    n_paths: usize,
) -> Result<Vec<Trajectory>> {
    stoch_wave_map(coef, grid, z0, z1, seed, n_paths, Trajectory::clone)
}
