use serde::{Deserialize, Serialize};

use super::geometry::ControlGeometry;
use crate::error::{arg, Error, Result};
use crate::linalg::{conjugate_gradient, conjugate_residual};
use crate::pde::{
    CoefficientField, Damping, Direction, Grid, GridFunction, HeatOperator, WaveSystem,
};

/// Outcome of a control synthesis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlResult {
    /// Control values at the interior nodes, one snapshot per time step (constant on the step).
    pub control: Vec<Vec<f64>>,
    /// Norm of the terminal state (heat, grid `L²`) or of the terminal pair minus the target
    /// (wave, discrete energy norm).
    pub terminal_residual: f64,
    /// `terminal_residual` divided by the norm of the initial state (or pair minus target).
    pub relative_residual: f64,
    pub cg_iterations: usize,
    pub cg_history: Vec<f64>,
    pub epsilon: Option<f64>,
    /// `(Σ dt |uⁿ|²)^{1/2}` in the grid inner product.
    pub cost: f64,
    /// `|y_{k+1} - y_k|` per outer iteration of the semilinear loop.
    pub outer_history: Vec<f64>,
    pub warnings: Vec<String>,
}

fn cost(grid: &Grid, control: &[Vec<f64>]) -> f64 {
    control
        .iter()
        .map(|u| grid.dt() * grid.inner(u, u))
        .sum::<f64>()
        .sqrt()
}

/// The heat control Gramian `Λφ = y(T)` for `y(0) = 0` and `u = χ w(φ)`, where `w` are the
/// adjoint stages of the backward solve from `φ`.
pub struct HeatGramian {
    op: HeatOperator,
}

impl HeatGramian {
    /// `coef` with the mask replaced by `omega`.
    pub fn new(
        coef: &CoefficientField,
        grid: &Grid,
        omega: Vec<f64>,
        extra_potential: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let coef = coef.clone().with_mask_values(grid, omega);
        let op = match extra_potential {
            Some(q) => HeatOperator::with_extra_potential(&coef, grid, &q)?,
            None => HeatOperator::new(&coef, grid)?,
        };
        Ok(Self { op })
    }

    pub fn grid(&self) -> &Grid {
        self.op.grid()
    }

    /// `u = χ w(φ)`.
    pub fn control_from(&self, phi: &[f64]) -> Result<Vec<Vec<f64>>> {
        let back = self.op.solve(phi, None, Direction::Backward, None)?;
        let chi = self.op.mask();
        Ok(back
            .stages
            .unwrap_or_default()
            .into_iter()
            .map(|w| w.iter().zip(chi).map(|(a, c)| a * c).collect())
            .collect())
    }

    pub fn forward(&self, y0: &[f64], control: Option<&[Vec<f64>]>) -> Result<Vec<f64>> {
        let t = self.op.solve(y0, control, Direction::Forward, None)?;
        Ok(t.states.into_iter().next_back().unwrap_or_default())
    }

    pub fn trajectory(
        &self,
        y0: &[f64],
        control: Option<&[Vec<f64>]>,
    ) -> Result<crate::pde::Trajectory> {
        self.op.solve(y0, control, Direction::Forward, None)
    }

    pub fn apply(&self, phi: &[f64]) -> Result<Vec<f64>> {
        let u = self.control_from(phi)?;
        self.forward(&vec![0.0; phi.len()], Some(&u))
    }
}

/// Penalized HUM: solves `(Λ + εI) φ = -y_free(T)` by conjugate gradients and returns
/// `u = χ w(φ)`, for which `y(T) = -εφ`.
pub fn hum_null_control_heat(
    coef: &CoefficientField,
    grid: &Grid,
    geometry: &ControlGeometry,
    y0: &GridFunction,
    epsilon: f64,
    cg_tol: f64,
    max_iter: usize,
) -> Result<ControlResult> {
    null_control_with_potential(coef, grid, geometry, y0, epsilon, cg_tol, max_iter, None)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn null_control_with_potential(
    coef: &CoefficientField,
    grid: &Grid,
    geometry: &ControlGeometry,
    y0: &GridFunction,
    epsilon: f64,
    cg_tol: f64,
    max_iter: usize,
    extra_potential: Option<Vec<Vec<f64>>>,
) -> Result<ControlResult> {
    if !(epsilon > 0.0) {
        return arg("the penalization epsilon must be positive");
    }
    if y0.values.len() != grid.len() {
        return arg("y0 does not match the grid");
    }
    let gram = HeatGramian::new(coef, grid, geometry.mask(grid), extra_potential)?;
    let free = gram.forward(&y0.values, None)?;
    let rhs: Vec<f64> = free.iter().map(|v| -v).collect();
    let cg = conjugate_gradient(
        |phi| {
            let mut out = gram.apply(phi)?;
            for (o, p) in out.iter_mut().zip(phi) {
                *o += epsilon * p;
            }
            Ok(out)
        },
        &rhs,
        |a, b| grid.inner(a, b),
        cg_tol,
        max_iter,
    )?;
    if !cg.converged {
        return Err(Error::NoConvergence {
            method: "penalized HUM conjugate gradient",
            iterations: cg.iterations,
            residual: cg.residual,
            history: cg.history,
        });
    }
    let control = gram.control_from(&cg.x)?;
    let terminal = gram.forward(&y0.values, Some(&control))?;
    let residual = grid.norm(&terminal);
    let y0n = y0.norm();
    Ok(ControlResult {
        cost: cost(grid, &control),
        control,
        terminal_residual: residual,
        relative_residual: if y0n > 0.0 { residual / y0n } else { residual },
        cg_iterations: cg.iterations,
        cg_history: cg.history,
        epsilon: Some(epsilon),
        outer_history: vec![],
        warnings: vec![],
    })
}

/// The wave HUM Gramian on terminal pairs `(q, v)`, symmetric in the energy inner product.
pub struct WaveGramian {
    sys: WaveSystem,
}

impl WaveGramian {
    pub fn new(coef: &CoefficientField, grid: &Grid, omega: Vec<f64>) -> Result<Self> {
        let coef = coef.clone().with_mask_values(grid, omega);
        let damped = coef.damping_values(grid).iter().any(|b| *b != 0.0);
        let sys = WaveSystem::new(
            &coef,
            grid,
            if damped {
                Damping::Interior
            } else {
                Damping::None
            },
        )?;
        Ok(Self { sys })
    }

    pub fn system(&self) -> &WaveSystem {
        &self.sys
    }

    /// Length of a stacked pair.
    pub fn len(&self) -> usize {
        2 * self.sys.layout().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.sys.energy_inner(a, b)
    }

    /// The control `u = L*φ`, adjoint of control-to-terminal-pair in the energy and
    /// `Σ dt ⟨·,·⟩` inner products.
    pub fn control_from(&self, phi: &[f64]) -> Vec<Vec<f64>> {
        let n = self.sys.layout().len();
        let mut lq = self.sys.stiffness().matvec(&phi[..n]);
        let mut lv: Vec<f64> = phi[n..]
            .iter()
            .zip(self.sys.mass())
            .map(|(a, m)| a * m)
            .collect();
        let steps = self.sys.grid().steps();
        let mut u = vec![Vec::new(); steps];
        for k in (0..steps).rev() {
            let (q0, v0, rbar) = self.sys.adjoint_step(&lq, &lv);
            let masked: Vec<f64> = rbar
                .iter()
                .zip(self.sys.mask())
                .map(|(r, c)| r * c)
                .collect();
            u[k] = self.sys.layout().interior_slice(&masked).to_vec();
            lq = q0;
            lv = v0;
        }
        u
    }

    /// Terminal pair from a stacked initial pair under `control`.
    pub fn terminal(&self, x0: &[f64], control: Option<&[Vec<f64>]>) -> Result<Vec<f64>> {
        let n = self.sys.layout().len();
        let t = self
            .sys
            .solve_with(x0[..n].to_vec(), x0[n..].to_vec(), |k, _, _| {
                control.map(|c| self.sys.control_rhs(&c[k]))
            })?;
        let mut out = t.states.last().cloned().unwrap_or_default();
        out.extend(
            t.velocities
                .as_ref()
                .and_then(|v| v.last())
                .cloned()
                .unwrap_or_default(),
        );
        Ok(out)
    }

    pub fn apply(&self, phi: &[f64]) -> Result<Vec<f64>> {
        let u = self.control_from(phi);
        self.terminal(&vec![0.0; phi.len()], Some(&u))
    }
}

/// HUM for exact control of the wave equation: conjugate residuals on `Λφ = target -
/// free terminal pair`, control `u = L*φ`. The Krylov residual equals the terminal
/// mismatch, so its monotone history exposes the plateau below the critical time. A horizon not beyond `T*` is reported as a
/// warning.
#[allow(clippy::too_many_arguments)]
pub fn hum_exact_control_wave(
    coef: &CoefficientField,
    grid: &Grid,
    geometry: &ControlGeometry,
    initial: (&GridFunction, &GridFunction),
    target: (&GridFunction, &GridFunction),
    cg_tol: f64,
    max_iter: usize,
) -> Result<ControlResult> {
    let gram = WaveGramian::new(coef, grid, geometry.mask(grid))?;
    let layout = *gram.system().layout();
    let stack = |a: &GridFunction, b: &GridFunction| {
        let mut x = layout.embed(&a.values);
        x.extend(layout.embed(&b.values));
        x
    };
    let x0 = stack(initial.0, initial.1);
    let z = stack(target.0, target.1);
    let mut warnings = vec![];
    if grid.horizon() <= geometry.t_star {
        warnings.push(format!(
            "horizon {} does not exceed the critical time {}; exact control is not expected",
            grid.horizon(),
            geometry.t_star
        ));
    }
    let free = gram.terminal(&x0, None)?;
    let rhs: Vec<f64> = z.iter().zip(&free).map(|(a, b)| a - b).collect();
    let cg = conjugate_residual(
        |phi| gram.apply(phi),
        &rhs,
        |a, b| gram.inner(a, b),
        cg_tol,
        max_iter,
    )?;
    if !cg.converged {
        return Err(Error::NoConvergence {
            method: "wave HUM conjugate residual",
            iterations: cg.iterations,
            residual: cg.residual,
            history: cg.history,
        });
    }
    let control = gram.control_from(&cg.x);
    let reached = gram.terminal(&x0, Some(&control))?;
    let diff: Vec<f64> = reached.iter().zip(&z).map(|(a, b)| a - b).collect();
    let residual = gram.inner(&diff, &diff).max(0.0).sqrt();
    let base: Vec<f64> = x0.iter().zip(&z).map(|(a, b)| a - b).collect();
    let base = gram.inner(&base, &base).max(0.0).sqrt();
    Ok(ControlResult {
        cost: cost(grid, &control),
        control,
        terminal_residual: residual,
        relative_residual: if base > 0.0 {
            residual / base
        } else {
            residual
        },
        cg_iterations: cg.iterations,
        cg_history: cg.history,
        epsilon: None,
        outer_history: vec![],
        warnings,
    })
}
