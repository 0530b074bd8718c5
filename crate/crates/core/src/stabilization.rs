//! Damped-wave experiments: energy series under boundary or local damping and fitted decay
//! laws.

use serde::{Deserialize, Serialize};

use crate::control::ControlGeometry;
use crate::error::{arg, Error, Result};
use crate::linalg::{fit_line, r_squared};
use crate::pde::{CoefficientField, Damping, Grid, GridFunction, WaveSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecayModel {
    /// `E(t) ≈ M e^{-rt} E(0)`; `rate_or_c` is `r`.
    Exponential,
    /// `E(t) ≈ (C / ln(2+t))² E_D(0)` with `E_D` the graph-norm energy; `rate_or_c` is `C`.
    Logarithmic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub model: DecayModel,
    pub rate_or_c: f64,
    /// Exponential model only: the prefactor `M`.
    pub prefactor: f64,
    pub r_squared: f64,
    /// Fitted time range.
    pub window: (f64, f64),
    /// Set when the energy in the window is zero and nothing could be fitted.
    pub degenerate: bool,
}

/// Energy series of one experiment and its fits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DampingRun {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub exponential: DecayFit,
    pub logarithmic: DecayFit,
    /// `E(t_{k+1}) ≤ E(t_k)` up to round-off for every step.
    pub monotone: bool,
    pub dissipative: bool,
    pub flags: Vec<String>,
}

impl DampingRun {
    /// `ln E - ln(fitted E)` for the exponential model, `NaN` where `E = 0`.
    pub fn fit_residuals(&self) -> Vec<f64> {
        let e0 = self.energy[0];
        let f = &self.exponential;
        self.times
            .iter()
            .zip(&self.energy)
            .map(|(t, e)| {
                if *e > 0.0 && !f.degenerate {
                    e.ln() - (f.prefactor * e0).ln() + f.rate_or_c * t
                } else {
                    f64::NAN
                }
            })
            .collect()
    }
}

/// Fits both decay models on the tail half `t ≥ T/2` of the series.
pub fn fit_decay(times: &[f64], energy: &[f64], graph_energy: f64) -> (DecayFit, DecayFit) {
    let horizon = times.last().copied().unwrap_or(0.0);
    let window = (0.5 * horizon, horizon);
    let (t, e): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(energy)
        .filter(|(t, e)| **t >= window.0 && **e > 0.0)
        .map(|(t, e)| (*t, *e))
        .unzip();
    let degenerate = t.len() < 2 || energy[0] <= 0.0;
    let blank = |model| DecayFit {
        model,
        rate_or_c: 0.0,
        prefactor: 0.0,
        r_squared: 0.0,
        window,
        degenerate: true,
    };
    if degenerate {
        return (
            blank(DecayModel::Exponential),
            blank(DecayModel::Logarithmic),
        );
    }
    let y: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let line = fit_line(&t, &y);
    let exponential = DecayFit {
        model: DecayModel::Exponential,
        rate_or_c: -line.slope,
        prefactor: line.intercept.exp() / energy[0],
        r_squared: line.r_squared,
        window,
        degenerate: false,
    };
    let lnln: Vec<f64> = t.iter().map(|s| (2.0 + s).ln().ln()).collect();
    let ln_c = y
        .iter()
        .zip(&lnln)
        .map(|(a, b)| 0.5 * (a - graph_energy.ln()) + b)
        .sum::<f64>()
        / y.len() as f64;
    let logarithmic = DecayFit {
        model: DecayModel::Logarithmic,
        rate_or_c: ln_c.exp(),
        prefactor: 1.0,
        r_squared: r_squared(&y, |i| graph_energy.ln() + 2.0 * ln_c - 2.0 * lnln[i]),
        window,
        degenerate: false,
    };
    (exponential, logarithmic)
}

fn graph_energy(sys: &WaveSystem, q: &[f64], v: &[f64]) -> f64 {
    let sq = sys.stiffness().matvec(q);
    let sv = sys.stiffness().matvec(v);
    let a: f64 = sq.iter().zip(sys.mass()).map(|(x, m)| x * x / m).sum();
    let b: f64 = v.iter().zip(&sv).map(|(x, y)| x * y).sum();
    sys.energy(q, v) + 0.5 * (a + b)
}

fn is_monotone(e: &[f64]) -> bool {
    let scale = e.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    e.windows(2).all(|w| w[1] <= w[0] + 1e-12 * scale)
}

fn finish(
    times: Vec<f64>,
    energy: Vec<f64>,
    graph: f64,
    dissipative: bool,
    mut flags: Vec<String>,
) -> DampingRun {
    let (exponential, logarithmic) = fit_decay(&times, &energy, graph);
    if energy[0] == 0.0 {
        flags.push(
            "zero initial energy: the solution is the equilibrium and the fits are degenerate"
                .into(),
        );
    }
    if !dissipative {
        flags.push("no damping: the run is conservative".into());
    }
    DampingRun {
        monotone: is_monotone(&energy),
        times,
        energy,
        exponential,
        logarithmic,
        dissipative,
        flags,
    }
}

/// Wave equation on an interval with `∂_ν y + a y_t = 0` at the endpoints carrying a gain and
/// Dirichlet conditions elsewhere.
pub fn boundary_damping_experiment(
    coef: &CoefficientField,
    grid: &Grid,
    left: Option<f64>,
    right: Option<f64>,
    y0: &GridFunction,
    y1: &GridFunction,
) -> Result<DampingRun> {
    if left.is_none() && right.is_none() {
        return arg("boundary damping needs at least one damped endpoint");
    }
    let sys = WaveSystem::new(coef, grid, Damping::Boundary { left, right })?;
    let traj = sys.solve(&y0.values, &y1.values, None)?;
    let vel = traj
        .velocities
        .as_ref()
        .expect("wave trajectories carry velocities");
    let energy: Vec<f64> = traj
        .states
        .iter()
        .zip(vel)
        .map(|(q, v)| sys.energy(q, v))
        .collect();
    let times = (0..=grid.steps()).map(|k| grid.time(k)).collect();
    let graph = graph_energy(&sys, &traj.states[0], &vel[0]);
    let dissipative = left.unwrap_or(0.0) > 0.0 || right.unwrap_or(0.0) > 0.0;
    Ok(finish(times, energy, graph, dissipative, vec![]))
}

/// Local damping `b(x) g(y_t)` with `g(s) = c₀ s`, and an optional power nonlinearity
/// `f(y) = |y|^{q-1} y` whose primitive enters the energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalDamping {
    pub c0: f64,
    /// Exponent `q ≥ 1` of the nonlinearity.
    pub power: Option<f64>,
}

fn power_f(q: f64, s: f64) -> f64 {
    s.abs().powf(q - 1.0) * s
}

fn power_primitive(q: f64, s: f64) -> f64 {
    s.abs().powf(q + 1.0) / (q + 1.0)
}

/// Runs the locally damped wave equation with damping `c₀ b(x)` taken from
/// `coef.with_damping(b)`. With a nonlinearity each midpoint step uses the discrete gradient
/// `(F(q^{n+1}) - F(qⁿ)) / (q^{n+1} - qⁿ)`, solved by fixed-point iteration, so the discrete
/// energy obeys the same dissipation identity as in the linear case. If `region` is given,
/// `b` must be positive at every node of its `ω`.
pub fn local_damping_experiment(
    coef: &CoefficientField,
    grid: &Grid,
    b: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    damping: LocalDamping,
    region: Option<&ControlGeometry>,
    y0: &GridFunction,
    y1: &GridFunction,
) -> Result<DampingRun> {
    let c0 = damping.c0;
    if !(c0 >= 0.0 && c0.is_finite()) {
        return arg("the damping constant c0 must be finite and non-negative");
    }
    if damping.power.is_some_and(|q| !(q >= 1.0 && q.is_finite())) {
        return arg("the nonlinearity exponent must be at least 1");
    }
    let nodal: Vec<f64> = (0..grid.len()).map(|k| b(&grid.point(k))).collect();
    if let Some(x) = nodal.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return arg(format!("damping profile takes the value {x}"));
    }
    if let Some(geo) = region {
        let mask = geo.mask(grid);
        if mask.iter().zip(&nodal).any(|(m, v)| *m != 0.0 && *v <= 0.0) {
            return arg("the damping profile vanishes somewhere in the control region");
        }
    }
    let coef = coef.clone().with_damping(move |x| c0 * b(x));
    let sys = WaveSystem::new(&coef, grid, Damping::Interior)?;
    let m = sys.mass().to_vec();
    let extra = |q: &[f64]| -> f64 {
        damping.power.map_or(0.0, |p| {
            q.iter()
                .zip(&m)
                .map(|(s, mi)| mi * power_primitive(p, *s))
                .sum()
        })
    };
    let mut q = y0.values.clone();
    let mut v = y1.values.clone();
    let mut energy = vec![sys.energy(&q, &v) + extra(&q)];
    let dt = grid.dt();
    for _ in 0..grid.steps() {
        let (q1, v1) = match damping.power {
            None => sys.step(&q, &v, None),
            Some(p) => {
                let mut next = sys.step(&q, &v, None);
                let mut change = f64::INFINITY;
                for _ in 0..100 {
                    let rhs: Vec<f64> = (0..q.len())
                        .map(|i| {
                            let (a, c) = (q[i], next.0[i]);
                            let g = if (c - a).abs() > 1e-9 * (1.0 + a.abs()) {
                                (power_primitive(p, c) - power_primitive(p, a)) / (c - a)
                            } else {
                                power_f(p, 0.5 * (a + c))
                            };
                            -dt * m[i] * g
                        })
                        .collect();
                    let trial = sys.step(&q, &v, Some(&rhs));
                    change = trial
                        .0
                        .iter()
                        .zip(&next.0)
                        .map(|(x, y)| (x - y).abs())
                        .fold(0.0, f64::max);
                    let size = trial.0.iter().fold(0.0f64, |s, x| s.max(x.abs()));
                    next = trial;
                    change /= 1.0 + size;
                    if change <= 1e-14 {
                        break;
                    }
                }
                if change > 1e-14 {
                    return Err(Error::NoConvergence {
                        method: "discrete-gradient fixed point",
                        iterations: 100,
                        residual: change,
                        history: vec![],
                    });
                }
                next
            }
        };
        q = q1;
        v = v1;
        energy.push(sys.energy(&q, &v) + extra(&q));
    }
    let times = (0..=grid.steps()).map(|k| grid.time(k)).collect();
    let graph = graph_energy(&sys, &y0.values, &y1.values) + extra(&y0.values);
    let dissipative = c0 > 0.0 && nodal.iter().any(|v| *v > 0.0);
    Ok(finish(times, energy, graph, dissipative, vec![]))
}
