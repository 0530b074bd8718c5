use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{gram_of_columns, max_quotient, ObsEstimate, QuotientOptions};
use crate::control::ControlGeometry;
use crate::error::{arg, Result};
use crate::linalg::fit_line;
use crate::pde::{CoefficientField, Direction, Grid, GridFunction, HeatOperator};

/// Which end of the adjoint trajectory the heat inequality bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeatObsMode {
    /// `|ψ(0)| ≤ C |ψ|_{L²(ω×(0,T))}`.
    Initial,
    /// `|ψ(T)| ≤ C |ψ|_{L²(ω×(0,T))}`.
    Terminal,
}

/// Observability constant of the discrete adjoint heat equation observed on `geometry`'s `ω`.
pub fn obs_constant_heat(
    coef: &CoefficientField,
    grid: &Grid,
    geometry: &ControlGeometry,
    mode: HeatObsMode,
) -> Result<ObsEstimate> {
    heat_observability(
        coef,
        grid,
        &geometry.mask(grid),
        mode,
        &QuotientOptions::default(),
    )
}

/// Observability constant for an explicit mask `omega` on the interior nodes.
///
/// The adjoint is the exact transpose of the Crank–Nicolson scheme, run backward from each
/// `L²`-orthonormal nodal datum; the observation is `Σₙ dt ⟨χwⁿ, χwⁿ⟩` over the adjoint
/// stages `wⁿ`.
pub fn heat_observability(
    coef: &CoefficientField,
    grid: &Grid,
    omega: &[f64],
    mode: HeatObsMode,
    opts: &QuotientOptions,
) -> Result<ObsEstimate> {
    if omega.len() != grid.len() {
        return arg("the observation mask does not match the grid");
    }
    if omega.iter().all(|c| *c == 0.0) {
        return arg("the observation region is empty");
    }
    let coef = coef.clone().with_mask_values(grid, omega.to_vec());
    let op = HeatOperator::new(&coef, grid)?;
    let n = grid.len();
    let observed: Vec<usize> = (0..n).filter(|&i| omega[i] != 0.0).collect();
    let scale = 1.0 / grid.cell().sqrt();
    let w = (grid.dt() * grid.cell()).sqrt();
    let solved: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = scale;
            let back = op.solve(&e, None, Direction::Backward, None)?;
            let mut col = Vec::with_capacity(observed.len() * grid.steps());
            for stage in back.stages.as_deref().unwrap_or_default() {
                col.extend(observed.iter().map(|&i| w * omega[i] * stage[i]));
            }
            Ok((col, back.states[0].clone()))
        })
        .collect::<Result<_>>()?;
    let (cols, initial): (Vec<_>, Vec<_>) = solved.into_iter().unzip();
    let o = gram_of_columns(&cols);
    let b = match mode {
        HeatObsMode::Terminal => None,
        HeatObsMode::Initial => {
            let p = DMatrix::from_fn(n, n, |i, j| initial[j][i]);
            Some(p.tr_mul(&p) * grid.cell())
        }
    };
    let q = max_quotient(&o, b.as_ref(), opts)?;
    let values = q.coords.iter().map(|c| c * scale).collect();
    Ok(ObsEstimate {
        constant: q.lambda.max(0.0).sqrt(),
        maximizer: GridFunction::new(*grid, values)?,
        maximizer_velocity: None,
        iterations: q.iterations,
        regularization: q.delta,
        eigen_residual: q.residual,
        beyond_critical_time: None,
        half_width: None,
        lower_bound_only: false,
    })
}

/// Constants for constant potentials `a = κ` and the fit `ln C ≈ c₀ + c₁ κ^{2/3}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSweep {
    pub kappa: Vec<f64>,
    pub constants: Vec<f64>,
    pub c0: f64,
    pub c1: f64,
    pub r_squared: f64,
    /// Root-mean-square residual of the fit in `ln C`.
    pub residual: f64,
}

/// Runs [`heat_observability`] for each `κ` with the potential of `coef` replaced by `κ`.
pub fn potential_sweep(
    coef: &CoefficientField,
    grid: &Grid,
    geometry: &ControlGeometry,
    mode: HeatObsMode,
    kappa: &[f64],
) -> Result<PotentialSweep> {
    if kappa.len() < 2 {
        return arg("a potential sweep needs at least two values");
    }
    let mask = geometry.mask(grid);
    let constants: Vec<f64> = kappa
        .par_iter()
        .map(|k| {
            let c = coef.clone().with_constant_potential(*k);
            heat_observability(&c, grid, &mask, mode, &QuotientOptions::default())
                .map(|e| e.constant)
        })
        .collect::<Result<_>>()?;
    let x: Vec<f64> = kappa.iter().map(|k| k.abs().powf(2.0 / 3.0)).collect();
    let y: Vec<f64> = constants.iter().map(|c| c.ln()).collect();
    let fit = fit_line(&x, &y);
    let residual = (x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - fit.intercept - fit.slope * a).powi(2))
        .sum::<f64>()
        / x.len() as f64)
        .sqrt();
    Ok(PotentialSweep {
        kappa: kappa.to_vec(),
        constants,
        c0: fit.intercept,
        c1: fit.slope,
        r_squared: fit.r_squared,
        residual,
    })
}
