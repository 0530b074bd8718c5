//! Crank–Nicolson solvers for the linear, semilinear and stochastic heat equations.
//!
//! One step reads `R_n y^{n+1} = E_n y^n + f^n` with `R_n = I - dt/2 L(t_{n+1})` and
//! `E_n = I + dt/2 L(t_n)`, where `L` is the spatial generator and `f^n = dt χ u^n` for a
//! control that is constant on `[t_n, t_{n+1})`. The backward direction applies the exact
//! transpose of this recursion, so forward and backward solves are adjoint to round-off in
//! the grid inner product.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::coef::CoefficientField;
use super::grid::{Grid, GridFunction};
use super::ops::{heat_generator, stiffness, DofLayout};
use super::Trajectory;
use crate::error::{arg, Result};
use crate::linalg::{BandLu, BandMatrix};
use crate::polyjet::seeded_rng;
use crate::seeds::derive_seed;

/// Blow-up threshold on `|y|_∞` for the semilinear solver.
pub const BLOW_UP_LEVEL: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

struct StepMatrices {
    r: BandLu,
    e: BandMatrix,
}

/// The discrete heat propagator on a fixed grid; reusable across solves and threads.
pub struct HeatOperator {
    grid: Grid,
    coef: CoefficientField,
    neg_lap: BandMatrix,
    mask: Vec<f64>,
    cached: Option<StepMatrices>,
    per_step: Option<Vec<StepMatrices>>,
}

impl HeatOperator {
    pub fn new(coef: &CoefficientField, grid: &Grid) -> Result<Self> {
        coef.validate(grid)?;
        let neg_lap = stiffness(grid, coef, &DofLayout::interior_only(grid));
        let mut op = Self {
            grid: *grid,
            coef: coef.clone(),
            neg_lap,
            mask: coef.mask_values(grid),
            cached: None,
            per_step: None,
        };
        if !coef.is_time_dependent() {
            op.cached = Some(op.assemble(0, None)?);
        }
        Ok(op)
    }

    /// An operator with the extra potential `q^n` (one field per step) built in; the step
    /// matrices are assembled once, and `extra_potential` arguments must then be `None`.
    pub fn with_extra_potential(
        coef: &CoefficientField,
        grid: &Grid,
        extra: &[Vec<f64>],
    ) -> Result<Self> {
        if extra.len() != grid.steps() || extra.iter().any(|q| q.len() != grid.len()) {
            return arg("extra potential must have one field per time step");
        }
        let mut op = Self::new(coef, grid)?;
        op.cached = None;
        op.per_step = Some(
            (0..grid.steps())
                .map(|n| op.assemble(n, Some(&extra[n])))
                .collect::<Result<_>>()?,
        );
        Ok(op)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mask(&self) -> &[f64] {
        &self.mask
    }

    fn assemble(&self, n: usize, extra: Option<&[f64]>) -> Result<StepMatrices> {
        let dt = self.grid.dt();
        let ln = heat_generator(
            &self.grid,
            &self.coef,
            &self.neg_lap,
            self.grid.time(n),
            extra,
        );
        let ln1 = heat_generator(
            &self.grid,
            &self.coef,
            &self.neg_lap,
            self.grid.time(n + 1),
            extra,
        );
        let id = BandMatrix::identity(self.grid.len(), ln.bandwidth());
        let r = BandLu::factor(&id.combine(1.0, &ln1, -0.5 * dt))?;
        let e = id.combine(1.0, &ln, 0.5 * dt);
        Ok(StepMatrices { r, e })
    }

    fn with_step<T>(
        &self,
        n: usize,
        extra: Option<&[f64]>,
        f: impl FnOnce(&StepMatrices) -> T,
    ) -> Result<T> {
        match (&self.per_step, &self.cached, extra) {
            (Some(p), _, None) => Ok(f(&p[n])),
            (Some(_), _, Some(_)) => arg("this operator already carries an extra potential"),
            (None, Some(c), None) => Ok(f(c)),
            _ => Ok(f(&self.assemble(n, extra)?)),
        }
    }

    /// `y^{n+1}` from `y^n`, with an additive right-hand side and an optional extra potential
    /// held fixed over the step.
    pub fn step(
        &self,
        n: usize,
        y: &[f64],
        rhs: Option<&[f64]>,
        extra_potential: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        self.with_step(n, extra_potential, |m| {
            let mut b = m.e.matvec(y);
            if let Some(r) = rhs {
                for (bi, ri) in b.iter_mut().zip(r) {
                    *bi += ri;
                }
            }
            m.r.solve(&mut b);
            b
        })
    }

    /// Transposed step: returns `(p^n, w^n)` with `w^n = R_n^{-T} p^{n+1}` and `p^n = E_nᵀ w^n`.
    pub fn adjoint_step(
        &self,
        n: usize,
        p_next: &[f64],
        extra_potential: Option<&[f64]>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        self.with_step(n, extra_potential, |m| {
            let mut w = p_next.to_vec();
            m.r.solve_transpose(&mut w);
            (m.e.matvec_transpose(&w), w)
        })
    }

    /// Full forward or backward solve. For the backward direction `data` is the terminal
    /// value and `source` enters as `dt χ g^n` in the adjoint recursion.
    pub fn solve(
        &self,
        data: &[f64],
        source: Option<&[Vec<f64>]>,
        direction: Direction,
        extra_potential: Option<&[Vec<f64>]>,
    ) -> Result<Trajectory> {
        let g = &self.grid;
        let steps = g.steps();
        if data.len() != g.len() {
            return arg("data does not match the grid");
        }
        if source.is_some_and(|s| s.len() != steps || s.iter().any(|u| u.len() != g.len())) {
            return arg(format!(
                "control must have {steps} snapshots of {} values",
                g.len()
            ));
        }
        if extra_potential.is_some_and(|s| s.len() != steps || s.iter().any(|u| u.len() != g.len()))
        {
            return arg("extra potential must have one field per time step");
        }
        let forcing = |n: usize| -> Option<Vec<f64>> {
            source.map(|s| {
                s[n].iter()
                    .zip(&self.mask)
                    .map(|(u, c)| g.dt() * c * u)
                    .collect()
            })
        };
        let pot = |n: usize| extra_potential.map(|p| p[n].as_slice());
        match direction {
            Direction::Forward => {
                let mut states = Vec::with_capacity(steps + 1);
                states.push(data.to_vec());
                for n in 0..steps {
                    let next = self.step(n, &states[n], forcing(n).as_deref(), pot(n))?;
                    states.push(next);
                }
                Ok(Trajectory::new(*g, states))
            }
            Direction::Backward => {
                let mut states = vec![Vec::new(); steps + 1];
                let mut stages = vec![Vec::new(); steps];
                states[steps] = data.to_vec();
                for n in (0..steps).rev() {
                    let f = forcing(n);
                    let (pn, w) = self.with_step(n, pot(n), |m| {
                        let mut w = states[n + 1].clone();
                        m.r.solve_transpose(&mut w);
                        if let Some(f) = &f {
                            for (wi, fi) in w.iter_mut().zip(f) {
                                *wi += fi;
                            }
                        }
                        (m.e.matvec_transpose(&w), w)
                    })?;
                    states[n] = pn;
                    stages[n] = w;
                }
                let mut t = Trajectory::new(*g, states);
                t.stages = Some(stages);
                Ok(t)
            }
        }
    }
}

/// Solves the heat equation forward from `y0`, or the discrete adjoint backward from terminal
/// data `y0`, with an optional control constant on each time step.
pub fn solve_heat(
    coef: &CoefficientField,
    grid: &Grid,
    y0: &GridFunction,
    control: Option<&[Vec<f64>]>,
    direction: Direction,
) -> Result<Trajectory> {
    HeatOperator::new(coef, grid)?.solve(&y0.values, control, direction, None)
}

/// As [`solve_heat`], with an extra potential `q^n` (one field per step) added to `a`.
pub fn solve_heat_with_potential(
    coef: &CoefficientField,
    grid: &Grid,
    y0: &GridFunction,
    control: Option<&[Vec<f64>]>,
    direction: Direction,
    extra_potential: &[Vec<f64>],
) -> Result<Trajectory> {
    HeatOperator::new(coef, grid)?.solve(&y0.values, control, direction, Some(extra_potential))
}

/// The nonlinearity `f(s) = sign · s · lnʳ(1 + |s|)` of `y_t - ∇·(p∇y) + f(y) = χu`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogNonlinearity {
    pub r: f64,
    pub sign: f64,
}

impl LogNonlinearity {
    pub fn new(r: f64, sign: f64) -> Result<Self> {
        if !(r >= 0.0) {
            return arg("the exponent r must be non-negative");
        }
        if sign != 1.0 && sign != -1.0 {
            return arg("sign must be +1 or -1");
        }
        Ok(Self { r, sign })
    }

    pub fn value(&self, s: f64) -> f64 {
        self.sign * s * self.log_pow(s)
    }

    fn log_pow(&self, s: f64) -> f64 {
        if self.r == 0.0 {
            1.0
        } else {
            s.abs().ln_1p().powf(self.r)
        }
    }

    /// `f(s) / s`, extended continuously to `s = 0`.
    pub fn quotient(&self, s: f64) -> f64 {
        self.sign * self.log_pow(s)
    }

    pub fn derivative(&self, s: f64) -> f64 {
        let a = s.abs();
        let l = a.ln_1p();
        let tail = if self.r == 0.0 || a == 0.0 {
            0.0
        } else {
            self.r * l.powf(self.r - 1.0) * a / (1.0 + a)
        };
        self.sign * (self.log_pow(s) + tail)
    }
}

/// Semilinear heat equation with `f(s) = sign · s · lnʳ(1+|s|)`.
///
/// The nonlinearity is lagged: on step `n` it enters as the potential `-f(y^n)/y^n`, held
/// fixed while the linear part is advanced by Crank–Nicolson. The run stops with
/// `blow_up_step` set as soon as `|y|_∞` exceeds [`BLOW_UP_LEVEL`].
pub fn solve_semilinear_heat(
    coef: &CoefficientField,
    grid: &Grid,
    y0: &GridFunction,
    control: Option<&[Vec<f64>]>,
    r_exponent: f64,
    sign: f64,
) -> Result<Trajectory> {
    let f = LogNonlinearity::new(r_exponent, sign)?;
    let op = HeatOperator::new(coef, grid)?;
    let steps = grid.steps();
    if control.is_some_and(|c| c.len() != steps) {
        return arg(format!("control must have {steps} snapshots"));
    }
    let mut states = vec![y0.values.clone()];
    let mut blow_up = None;
    for n in 0..steps {
        let y = &states[n];
        let q: Vec<f64> = y.iter().map(|&s| -f.quotient(s)).collect();
        let forcing: Option<Vec<f64>> = control.map(|c| {
            c[n].iter()
                .zip(op.mask())
                .map(|(u, m)| grid.dt() * m * u)
                .collect()
        });
        let next = op.step(n, y, forcing.as_deref(), Some(&q))?;
        let big = next.iter().any(|v| !(v.abs() <= BLOW_UP_LEVEL));
        states.push(next);
        if big {
            blow_up = Some(n + 1);
            break;
        }
    }
    let mut t = Trajectory::new(*grid, states);
    t.blow_up_step = blow_up;
    Ok(t)
}

/// One path of `dz = (∇·(p∇z) + a z + a₁·∇z) dt + c z dB`: Crank–Nicolson in the drift with
/// the Itô noise increment `c z^n ΔB_n` added explicitly.
pub fn solve_stoch_heat_path(
    op: &HeatOperator,
    z0: &[f64],
    increments: &[f64],
) -> Result<Trajectory> {
    let grid = *op.grid();
    if increments.len() != grid.steps() {
        return arg("one Brownian increment per time step is required");
    }
    let c = op.coef.noise_values(&grid);
    let noisy = c.iter().any(|v| *v != 0.0);
    let mut states = vec![z0.to_vec()];
    for (n, db) in increments.iter().enumerate() {
        let z = &states[n];
        let rhs: Option<Vec<f64>> =
            noisy.then(|| z.iter().zip(&c).map(|(zi, ci)| ci * zi * db).collect());
        let next = op.step(n, z, rhs.as_deref(), None)?;
        states.push(next);
    }
    Ok(Trajectory::new(grid, states))
}

/// `N(0, dt)` increments for path `index` of an ensemble seeded with `seed`.
pub fn path_increments(seed: u64, index: usize, dt: f64, steps: usize) -> Vec<f64> {
    let mut rng = seeded_rng(derive_seed(seed, "path", index as u64));
    let sd = dt.sqrt();
    (0..steps)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect()
}

/// Runs `n_paths` independent paths in parallel and maps each trajectory through `f`.
/// Results are returned in path order and do not depend on thread scheduling.
pub fn stoch_heat_map<T: Send>(
    coef: &CoefficientField,
    grid: &Grid,
    z0: &GridFunction,
    seed: u64,
    n_paths: usize,
    f: impl Fn(&Trajectory) -> T + Sync,
) -> Result<Vec<T>> {
    if n_paths == 0 {
        return arg("need at least one path");
    }
    let op = HeatOperator::new(coef, grid)?;
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let inc = path_increments(seed, i, grid.dt(), grid.steps());
            solve_stoch_heat_path(&op, &z0.values, &inc).map(|t| f(&t))
        })
        .collect()
}

/// Ensemble of stochastic heat trajectories sharing one grid; path `i` uses the stream
/// `derive_seed(seed, "path", i)`.
pub fn solve_stoch_heat(
    coef: &CoefficientField,
    grid: &Grid,
    z0: &GridFunction,
    seed: u64,
    n_paths: usize,
) -> Result<Vec<Trajectory>> {
    stoch_heat_map(coef, grid, z0, seed, n_paths, Trajectory::clone)
}

/// Smallest amplitude `A` (to relative accuracy `rel_tol`) for which the focusing run from
/// `A · profile` blows up within the grid horizon, found by bisection on `[lo, hi]`.
/// Returns `None` if even `hi` stays bounded.
pub fn blow_up_threshold(
    coef: &CoefficientField,
    grid: &Grid,
    profile: &GridFunction,
    r_exponent: f64,
    lo: f64,
    hi: f64,
    rel_tol: f64,
) -> Result<Option<f64>> {
    if !(lo > 0.0 && hi > lo && rel_tol > 0.0) {
        return arg("bisection needs 0 < lo < hi and a positive tolerance");
    }
    let blows = |a: f64| {
        solve_semilinear_heat(coef, grid, &profile.scale(a), None, r_exponent, -1.0)
            .map(|t| t.blew_up())
    };
    if !blows(hi)? {
        return Ok(None);
    }
    if blows(lo)? {
        return Ok(Some(lo));
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > rel_tol * b {
        let m = (a * b).sqrt();
        if blows(m)? {
            b = m;
        } else {
            a = m;
        }
    }
    Ok(Some(b))
}
