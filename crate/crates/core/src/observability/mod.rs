//! Discrete observability constants for the heat and wave equations, spectral-inequality
//! constants for sums of Dirichlet eigenfunctions, and Monte Carlo lower bounds for the
//! stochastic heat equation.
//!
//! Every constant here is the best constant of the discrete system on the given grid. For a
//! linear data-to-observation map the squared constant is the largest eigenvalue of the
//! pencil `(B, O + δI)`, where `O` is the observation Gram matrix and `B` the Gram matrix of
//! the quantity being bounded.

mod heat;
mod lr;
mod stoch;
mod wave;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::pde::GridFunction;

pub use heat::{
    heat_observability, obs_constant_heat, potential_sweep, HeatObsMode, PotentialSweep,
};
pub use lr::{lr_gram_constant, lr_growth_fit, GrowthFit, LRSpectrum, LrCutoff};
pub use stoch::{forward_obs_ratio, stoch_obs_lower_bound};
pub use wave::{obs_constant_wave, Anchor, WaveObsOptions, WaveObservation};

/// A discrete observability constant and its extremal datum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObsEstimate {
    pub constant: f64,
    /// Extremal datum, normalized to unit norm in the data space of the inequality.
    pub maximizer: GridFunction,
    /// Velocity component of the extremal pair (wave only).
    pub maximizer_velocity: Option<GridFunction>,
    /// Power iterations used to confirm the extremal eigenpair.
    pub iterations: usize,
    /// The shift `δ` added to the observation Gram matrix.
    pub regularization: f64,
    /// `|Mv - λv| / λ` for the composed quotient operator `M` at the returned eigenpair.
    pub eigen_residual: f64,
    /// Wave only: whether the horizon exceeds the critical time.
    pub beyond_critical_time: Option<bool>,
    /// Monte Carlo only: 95% half-width of the constant.
    pub half_width: Option<f64>,
    /// True when the constant is only a lower bound on the best constant.
    pub lower_bound_only: bool,
}

/// Options shared by the Rayleigh-quotient computations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuotientOptions {
    /// `δ = delta_rel · trace(O) / dim`.
    pub delta_rel: f64,
    /// Relative change of successive eigenvalue estimates at which the power iteration stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for QuotientOptions {
    fn default() -> Self {
        Self {
            delta_rel: 1e-12,
            tol: 1e-6,
            max_iter: 1000,
        }
    }
}

pub(crate) struct Quotient {
    pub lambda: f64,
    /// Extremal coordinates, unit Euclidean norm.
    pub coords: Vec<f64>,
    pub iterations: usize,
    pub delta: f64,
    pub residual: f64,
}

/// Largest eigenpair of `L⁻¹ B L⁻ᵀ` with `LLᵀ = O + δI`. A dense symmetric eigensolve gives the
/// starting vector and power iteration confirms it.
pub(crate) fn max_quotient(
    o: &DMatrix<f64>,
    b: Option<&DMatrix<f64>>,
    opts: &QuotientOptions,
) -> Result<Quotient> {
    let n = o.nrows();
    if n == 0 {
        return arg("empty data space");
    }
    let delta = opts.delta_rel * o.trace() / n as f64;
    if !(delta > 0.0) {
        return arg("the observation Gram matrix vanishes; the observed region sees nothing");
    }
    let shifted = o + DMatrix::identity(n, n) * delta;
    let chol = shifted.cholesky().ok_or_else(|| {
        Error::Singular("regularized observation Gram matrix is not positive definite".into())
    })?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("Cholesky factor is not invertible".into()))?;
    let mut m = match b {
        Some(b) => &linv * b * linv.transpose(),
        None => &linv * linv.transpose(),
    };
    m = (&m + m.transpose()) * 0.5;
    let eig = m.clone().symmetric_eigen();
    let top = eig.eigenvalues.imax();
    let mut y: DVector<f64> = eig.eigenvectors.column(top).into_owned();
    let mut lambda = eig.eigenvalues[top];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let my = &m * &y;
        let next = y.dot(&my);
        let norm = my.norm();
        if norm == 0.0 {
            return arg("the bounded quantity vanishes on the data space");
        }
        y = my / norm;
        let change = (next - lambda).abs() / next.abs();
        lambda = next;
        if change < opts.tol {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Error::NoConvergence {
                method: "observability power iteration",
                iterations,
                residual: change,
                history: vec![],
            });
        }
    }
    lambda = y.dot(&(&m * &y));
    let residual = (&m * &y - &y * lambda).norm() / lambda.abs();
    let c = linv.transpose() * &y;
    let c = &c / c.norm();
    Ok(Quotient {
        lambda,
        coords: c.iter().copied().collect(),
        iterations,
        delta,
        residual,
    })
}

/// `ZᵀZ` for an observation matrix given by its columns, one per basis datum.
pub(crate) fn gram_of_columns(cols: &[Vec<f64>]) -> DMatrix<f64> {
    let rows = cols.first().map_or(0, Vec::len);
    let z = DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i]);
    z.tr_mul(&z)
}
