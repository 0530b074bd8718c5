use rand_distr::{Distribution, StandardNormal};

use super::ObsEstimate;
use crate::control::ControlGeometry;
use crate::error::{arg, Result};
use crate::pde::{
    stoch_heat_map, CoefficientField, Direction, Grid, GridFunction, HeatOperator, Trajectory,
};
use crate::polyjet::seeded_rng;
use crate::seeds::derive_seed;

const Z95: f64 = 1.959963984540054;

/// `(|z(T)|², Σₙ₌₀^{N-1} dt |χ zⁿ|²)` with left-point sums in time.
fn terminal_and_observed(traj: &Trajectory, omega: &[f64]) -> (f64, f64) {
    let g = traj.grid;
    let last = &traj.states[traj.states.len() - 1];
    let obs = traj.states[..traj.states.len() - 1]
        .iter()
        .map(|z| {
            g.dt()
                * g.cell()
                * z.iter()
                    .zip(omega)
                    .map(|(v, c)| (c * v).powi(2))
                    .sum::<f64>()
        })
        .sum();
    (g.norm(last).powi(2), obs)
}

/// `|z(T)| / |χz|_{L²(0,T;L²)}` for the deterministic forward heat equation from `z0`, with the
/// same left-point time quadrature as [`stoch_obs_lower_bound`].
pub fn forward_obs_ratio(
    coef: &CoefficientField,
    grid: &Grid,
    omega: &[f64],
    z0: &GridFunction,
) -> Result<f64> {
    let op = HeatOperator::new(coef, grid)?;
    let t = op.solve(&z0.values, None, Direction::Forward, None)?;
    let (num, den) = terminal_and_observed(&t, omega);
    if den == 0.0 {
        return arg("the candidate is not seen by the observation region");
    }
    Ok((num / den).sqrt())
}

fn candidate(grid: &Grid, seed: u64, index: usize) -> GridFunction {
    let first = if grid.dim() == 1 { vec![1] } else { vec![1, 1] };
    if index == 0 {
        return grid.dirichlet_mode(&first);
    }
    let mut rng = seeded_rng(derive_seed(seed, "obs-candidate", index as u64));
    let mut values = vec![0.0; grid.len()];
    for k in 1..=8usize {
        let modes: Vec<usize> = if grid.dim() == 1 {
            vec![k]
        } else {
            vec![k.div_ceil(2), 1 + k / 2]
        };
        let a: f64 = StandardNormal.sample(&mut rng);
        let m = grid.dirichlet_mode(&modes);
        for (v, x) in values.iter_mut().zip(&m.values) {
            *v += a / k as f64 * x;
        }
    }
    let norm = grid.norm(&values);
    GridFunction {
        grid: *grid,
        values: values.into_iter().map(|v| v / norm).collect(),
    }
}

/// Monte Carlo lower bound for the observability constant of the stochastic heat equation,
/// `|z(T)|_{L²_F} ≤ 𝒞 |χz|_{L²_F(0,T;L²)}`.
///
/// For each candidate initial datum the ratio of sample means is formed over `n_paths` paths;
/// the square root of the largest ratio is returned with a delta-method 95% half-width.
/// Candidate 0 is the first Dirichlet mode; the rest are random smooth combinations.
pub fn stoch_obs_lower_bound(
    coef: &CoefficientField,
    grid: &Grid,
    geometry: &ControlGeometry,
    n_candidates: usize,
    n_paths: usize,
    seed: u64,
) -> Result<ObsEstimate> {
    if n_paths < 256 {
        return arg("at least 256 paths are required");
    }
    if n_candidates == 0 {
        return arg("at least one candidate is required");
    }
    let omega = geometry.mask(grid);
    if omega.iter().all(|c| *c == 0.0) {
        return arg("the observation region is empty");
    }
    let mut best: Option<(f64, f64, GridFunction)> = None;
    for i in 0..n_candidates {
        let z0 = candidate(grid, seed, i);
        let samples = stoch_heat_map(
            coef,
            grid,
            &z0,
            derive_seed(seed, "obs-paths", i as u64),
            n_paths,
            |t| terminal_and_observed(t, &omega),
        )?;
        let np = n_paths as f64;
        let mx = samples.iter().map(|s| s.0).sum::<f64>() / np;
        let my = samples.iter().map(|s| s.1).sum::<f64>() / np;
        if my == 0.0 {
            continue;
        }
        let ratio = mx / my;
        let var = samples
            .iter()
            .map(|(x, y)| (x - ratio * y).powi(2))
            .sum::<f64>()
            / (np - 1.0);
        let hw_ratio = Z95 * (var / np).sqrt() / my;
        let c = ratio.sqrt();
        let hw = hw_ratio / (2.0 * c);
        if best.as_ref().is_none_or(|b| c > b.0) {
            best = Some((c, hw, z0));
        }
    }
    let Some((constant, hw, z0)) = best else {
        return arg("no candidate is seen by the observation region");
    };
    Ok(ObsEstimate {
        constant,
        maximizer: z0,
        maximizer_velocity: None,
        iterations: n_candidates,
        regularization: 0.0,
        eigen_residual: 0.0,
        beyond_critical_time: None,
        half_width: Some(hw),
        lower_bound_only: true,
    })
}
