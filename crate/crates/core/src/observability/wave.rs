use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{gram_of_columns, max_quotient, ObsEstimate, QuotientOptions};
use crate::control::ControlGeometry;
use crate::error::{arg, Result};
use crate::pde::{CoefficientField, Damping, Grid, GridFunction, WaveSystem};

/// What the wave inequality observes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WaveObservation {
    /// `∫₀ᵀ∫_ω ψ²`, bounding `|ψ(0)|²_{L²} + |ψ_t(0)|²_{H⁻¹}`.
    Interior,
    /// `∫₀ᵀ∫_{Γ*} |∂_ν ψ|²` by one-sided differences, bounding `|ψ(0)|²_{H¹₀} + |ψ_t(0)|²_{L²}`.
    BoundaryTrace,
}

/// Whether the data are prescribed at `t = 0` or at `t = T`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Anchor {
    Initial,
    Terminal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveObsOptions {
    /// Number of discrete eigenmodes spanning the data; `None` takes `len / 5^dim` (at least 1).
    pub modes: Option<usize>,
    pub anchor: Anchor,
    pub quotient: QuotientOptions,
}

impl Default for WaveObsOptions {
    fn default() -> Self {
        Self {
            modes: None,
            anchor: Anchor::Initial,
            quotient: QuotientOptions::default(),
        }
    }
}

/// Observability constant of the discrete wave equation on data spanned by its lowest
/// eigenmodes.
///
/// Modes are the generalized eigenvectors `Sφ = μMφ` of the midpoint scheme, which evolve
/// independently, so the data norm is exactly preserved along the discrete flow. Time
/// integrals use the trapezoid rule on the time grid.
pub fn obs_constant_wave(
    coef: &CoefficientField,
    grid: &Grid,
    geometry: &ControlGeometry,
    observation: WaveObservation,
    opts: &WaveObsOptions,
) -> Result<ObsEstimate> {
    let omega = geometry.mask(grid);
    if observation == WaveObservation::Interior && omega.iter().all(|c| *c == 0.0) {
        return arg("the observation region is empty");
    }
    if observation == WaveObservation::BoundaryTrace && geometry.gamma_star.is_empty() {
        return arg("the observed boundary is empty");
    }
    let coef = coef.clone().with_mask_values(grid, omega.clone());
    let damped = coef.damping_values(grid).iter().any(|b| *b != 0.0);
    if damped && opts.anchor == Anchor::Terminal {
        return arg("terminal data are only supported for undamped waves");
    }
    let sys = WaveSystem::new(
        &coef,
        grid,
        if damped {
            Damping::Interior
        } else {
            Damping::None
        },
    )?;
    let n = grid.len();
    let k = opts
        .modes
        .unwrap_or((n / 5usize.pow(grid.dim() as u32)).max(1));
    if k == 0 || k > n {
        return arg(format!("mode count must lie in 1..={n}"));
    }
    let m = sys.mass();
    let s = sys.stiffness();
    let scaled = DMatrix::from_fn(n, n, |i, j| s.get(i, j) / (m[i] * m[j]).sqrt());
    let eig = ((&scaled + scaled.transpose()) * 0.5).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
    let mu: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    if mu[0] <= 0.0 {
        return arg("the wave operator is not positive; the data norm is undefined");
    }
    let phi: Vec<Vec<f64>> = order[..k]
        .iter()
        .map(|&c| {
            (0..n)
                .map(|i| eig.eigenvectors[(i, c)] / m[i].sqrt())
                .collect()
        })
        .collect();
    // basis pairs (q, v) with unit data norm
    let basis: Vec<(Vec<f64>, Vec<f64>)> = (0..2 * k)
        .map(|j| {
            let (mode, vel) = (j % k, j >= k);
            let f = match (observation, vel) {
                (WaveObservation::Interior, false) => 1.0,
                (WaveObservation::Interior, true) => mu[mode].sqrt(),
                (WaveObservation::BoundaryTrace, false) => 1.0 / mu[mode].sqrt(),
                (WaveObservation::BoundaryTrace, true) => 1.0,
            };
            let x: Vec<f64> = phi[mode].iter().map(|p| f * p).collect();
            if vel {
                (vec![0.0; n], x)
            } else {
                (x, vec![0.0; n])
            }
        })
        .collect();
    let probes = observation_probes(grid, geometry, &omega, observation);
    let steps = grid.steps();
    let dt = grid.dt();
    let cols: Vec<Vec<f64>> = basis
        .par_iter()
        .map(|(q0, v0)| {
            let v0: Vec<f64> = match opts.anchor {
                Anchor::Initial => v0.clone(),
                Anchor::Terminal => v0.iter().map(|v| -v).collect(),
            };
            let mut col = Vec::with_capacity(probes.len() * (steps + 1));
            let (mut q, mut v) = (q0.clone(), v0);
            for step in 0..=steps {
                let tw = if step == 0 || step == steps {
                    0.5 * dt
                } else {
                    dt
                };
                let r = tw.sqrt();
                col.extend(probes.iter().map(|(i, w)| r * w * q[*i]));
                if step < steps {
                    (q, v) = sys.step(&q, &v, None);
                }
            }
            col
        })
        .collect();
    let o = gram_of_columns(&cols);
    let quot = max_quotient(&o, None, &opts.quotient)?;
    let (mut q0, mut v0) = (vec![0.0; n], vec![0.0; n]);
    for (c, (bq, bv)) in quot.coords.iter().zip(&basis) {
        for i in 0..n {
            q0[i] += c * bq[i];
            v0[i] += c * bv[i];
        }
    }
    Ok(ObsEstimate {
        constant: quot.lambda.max(0.0).sqrt(),
        maximizer: GridFunction::new(*grid, q0)?,
        maximizer_velocity: Some(GridFunction::new(*grid, v0)?),
        iterations: quot.iterations,
        regularization: quot.delta,
        eigen_residual: quot.residual,
        beyond_critical_time: Some(geometry.beyond_critical_time()),
        half_width: None,
        lower_bound_only: false,
    })
}

/// Nodes and weights `w` such that the observation density is `Σ (w q_i)²`.
fn observation_probes(
    grid: &Grid,
    geometry: &ControlGeometry,
    omega: &[f64],
    obs: WaveObservation,
) -> Vec<(usize, f64)> {
    match obs {
        WaveObservation::Interior => {
            let cell = grid.cell().sqrt();
            (0..grid.len())
                .filter(|&i| omega[i] != 0.0)
                .map(|i| (i, cell * omega[i]))
                .collect()
        }
        WaveObservation::BoundaryTrace => {
            let mut out = Vec::new();
            let n = grid.n();
            let h = grid.h();
            for face in &geometry.gamma_star {
                let a = face.axis;
                let layer = if face.upper { n[a] - 1 } else { 0 };
                // ∂_ν ψ ≈ -ψ(adjacent) / h_a, integrated over the face with the tangential spacing
                let measure = if grid.dim() == 2 { h[1 - a] } else { 1.0 };
                let w = measure.sqrt() / h[a];
                for k in 0..grid.len() {
                    let idx = if grid.dim() == 1 {
                        [k, 0]
                    } else {
                        [k % n[0], k / n[0]]
                    };
                    if idx[a] == layer {
                        out.push((k, w));
                    }
                }
            }
            out
        }
    }
}
