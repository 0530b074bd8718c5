use super::geometry::ControlGeometry;
use super::hum::{null_control_with_potential, ControlResult};
use crate::error::{arg, Error, Result};
use crate::pde::{solve_semilinear_heat, CoefficientField, Grid, GridFunction, LogNonlinearity};

/// Parameters of the outer fixed-point loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SemilinearOptions {
    pub epsilon: f64,
    pub cg_tol: f64,
    pub max_iter: usize,
    /// `±1`: the nonlinearity is `sign · s · lnʳ(1+|s|)`; `-1` is the focusing case.
    pub sign: f64,
}

impl Default for SemilinearOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-8,
            cg_tol: 1e-8,
            max_iter: 500,
            sign: -1.0,
        }
    }
}

/// Nodes and weights of the 16-point Gauss–Legendre rule on `[0, 1]`.
pub fn gauss_legendre_16() -> ([f64; 16], [f64; 16]) {
    let n = 16;
    let mut x = [0.0; 16];
    let mut w = [0.0; 16];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = 0.5 * (1.0 - z);
        w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// `q(s) = ∫₀¹ f'(τ s) dτ` by 16-point Gauss quadrature.
pub fn linearized_potential(f: &LogNonlinearity, s: f64, rule: &([f64; 16], [f64; 16])) -> f64 {
    rule.0
        .iter()
        .zip(&rule.1)
        .map(|(t, w)| w * f.derivative(t * s))
        .sum()
}

/// Fixed-point null control for `y_t - ∇·(p∇y) + f(y) = χu` with `f(s) = sign·s·lnʳ(1+|s|)`.
///
/// Iteration `k` freezes `q_k = ∫₀¹ f'(τ y_k) dτ` (so `f(y_k) = q_k y_k`), solves the linear
/// penalized HUM problem with potential `-q_k`, and replaces `y_k` by the controlled linear
/// trajectory. It starts from `y ≡ 0` and stops when `|y_{k+1} - y_k| ≤ outer_tol |y_{k+1}|`
/// in the space-time norm. The returned residual comes from a semilinear run with the final
/// control.
#[allow(clippy::too_many_arguments)]
pub fn semilinear_null_control(
    coef: &CoefficientField,
    grid: &Grid,
    geometry: &ControlGeometry,
    y0: &GridFunction,
    r_exponent: f64,
    outer_tol: f64,
    max_outer: usize,
    options: SemilinearOptions,
) -> Result<ControlResult> {
    let f = LogNonlinearity::new(r_exponent, options.sign)?;
    if max_outer == 0 || !(outer_tol > 0.0) {
        return arg("need a positive outer tolerance and at least one outer iteration");
    }
    let mut warnings = vec![];
    if r_exponent >= 1.5 {
        warnings.push(format!(
            "r = {r_exponent} is outside the range r < 3/2 covered by the theory"
        ));
    }
    let rule = gauss_legendre_16();
    let steps = grid.steps();
    let mut y: Vec<Vec<f64>> = vec![vec![0.0; grid.len()]; steps + 1];
    let mut history = vec![];
    let spacetime = |a: &[Vec<f64>]| {
        a.iter()
            .map(|v| grid.dt() * grid.inner(v, v))
            .sum::<f64>()
            .sqrt()
    };
    for _ in 0..max_outer {
        let extra: Vec<Vec<f64>> = y[..steps]
            .iter()
            .map(|yn| {
                yn.iter()
                    .map(|s| -linearized_potential(&f, *s, &rule))
                    .collect()
            })
            .collect();
        let mut result = null_control_with_potential(
            coef,
            grid,
            geometry,
            y0,
            options.epsilon,
            options.cg_tol,
            options.max_iter,
            Some(extra.clone()),
        )?;
        let gram = super::hum::HeatGramian::new(coef, grid, geometry.mask(grid), Some(extra))?;
        let next = gram.trajectory(&y0.values, Some(&result.control))?.states;
        let diff: Vec<Vec<f64>> = next
            .iter()
            .zip(&y)
            .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p - q).collect())
            .collect();
        let change = spacetime(&diff);
        let size = spacetime(&next);
        history.push(change);
        y = next;
        if change <= outer_tol * size || size == 0.0 {
            let run = solve_semilinear_heat(
                &coef.clone().with_mask_values(grid, geometry.mask(grid)),
                grid,
                y0,
                Some(&result.control),
                r_exponent,
                options.sign,
            )?;
            if run.blew_up() {
                warnings.push("the semilinear run with the final control blew up".into());
            }
            let terminal = run.terminal();
            let residual = if run.blew_up() {
                f64::INFINITY
            } else {
                terminal.norm()
            };
            let y0n = y0.norm();
            result.terminal_residual = residual;
            result.relative_residual = if y0n > 0.0 { residual / y0n } else { residual };
            result.outer_history = history;
            result.warnings.extend(warnings);
            return Ok(result);
        }
    }
    let last = history.last().copied().unwrap_or(f64::NAN);
    Err(Error::NoConvergence {
        method: "semilinear fixed-point loop",
        iterations: max_outer,
        residual: last,
        history,
    })
}
