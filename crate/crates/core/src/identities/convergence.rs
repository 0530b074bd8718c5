//! Time-step refinement studies for the discretized stochastic identities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stoch::{
    brownian_increments, coarsen_increments, StochIdentityInstance, StochKind, StochResidualKernel,
};
use crate::error::{arg, Result};
use crate::polyjet::MultiPoly;
use crate::seeds::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    /// Time steps from coarsest to finest.
    pub dts: Vec<f64>,
    /// Mean absolute residual over the paths at each step size.
    pub mean_residuals: Vec<f64>,
    /// Least-squares slope of `log2(residual)` against `log2(dt)`.
    pub slope: f64,
    pub paths: usize,
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Refines the time grid of `template` from `base_steps` through `halvings` successive
/// halvings and records the mean residual at `x_pt` over `n_paths` Brownian paths.
///
/// Each path is drawn once on the finest grid and summed pairwise to obtain the coarser
/// grids, so all levels see the same realization. The template's stored path is ignored.
pub fn stoch_convergence_study(
    template: &StochIdentityInstance,
    kind: StochKind,
    x_pt: &[f64],
    base_steps: usize,
    halvings: usize,
    n_paths: usize,
    seed: u64,
) -> Result<ConvergenceStudy> {
    if base_steps == 0 || n_paths == 0 {
        return arg("need at least one step and one path");
    }
    let horizon = template.horizon();
    let levels = halvings + 1;
    let kernels: Vec<StochResidualKernel> = (0..levels)
        .map(|j| {
            let steps = base_steps << j;
            StochResidualKernel::new(&template.with_path(vec![0.0; steps])?, kind, x_pt)
        })
        .collect::<Result<_>>()?;
    let fine_steps = base_steps << halvings;
    let per_path: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut inc =
                brownian_increments(derive_seed(seed, "path", p as u64), horizon, fine_steps)?;
            let mut out = vec![0.0; levels];
            for j in (0..levels).rev() {
                out[j] = kernels[j].residual(&inc)?;
                if j > 0 {
                    inc = coarsen_increments(&inc);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut mean = vec![0.0; levels];
    for r in &per_path {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n_paths as f64;
    }
    let dts: Vec<f64> = (0..levels)
        .map(|j| horizon / (base_steps << j) as f64)
        .collect();
    let lx: Vec<f64> = dts.iter().map(|d| d.log2()).collect();
    let ly: Vec<f64> = mean.iter().map(|r| r.log2()).collect();
    Ok(ConvergenceStudy {
        slope: fit_slope(&lx, &ly),
        dts,
        mean_residuals: mean,
        paths: n_paths,
    })
}

/// Refinement instance in one space dimension: `u_d = t x²` (parabolic) or `t² x²`
/// (hyperbolic), `ℓ = t + x`, `b = 1`, `Ψ = 1` (parabolic only), and noise shape `x(1 - x)`
/// when `noisy`.
pub fn reference_stoch_instance(kind: StochKind, noisy: bool) -> Result<StochIdentityInstance> {
    let p = |s: &str| MultiPoly::from_text(2, s);
    let one = MultiPoly::constant(2, 1.0);
    let (drift, psi) = match kind {
        StochKind::Parabolic => (p("1 2 : 1")?, one.clone()),
        StochKind::Hyperbolic => (p("2 2 : 1")?, MultiPoly::zero(2)),
    };
    let noise = if noisy {
        p("0 1 : 1\n0 2 : -1")?
    } else {
        MultiPoly::zero(2)
    };
    StochIdentityInstance::with_increments(
        drift,
        noise,
        p("1 0 : 1\n0 1 : 1")?,
        psi,
        vec![vec![one]],
        1.0,
        vec![0.0],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        assert!((fit_slope(&x, &y) - 2.0).abs() < 1e-14);
    }
}
