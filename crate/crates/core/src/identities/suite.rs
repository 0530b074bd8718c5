//! Randomized verification runs over many instances and sample points.

use std::fmt;
use std::str::FromStr;

use rand::RngExt;
use rand_xoshiro::Xoshiro256StarStar;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::det::{eval_det_identity, DetIdentityInstance, DetSlice};
use super::multiplier::eval_multiplier_identity;
use super::ode::eval_ode_identity;
use super::stoch::{eval_stoch_pointwise, StochIdentityInstance, StochKind};
use crate::error::{arg, Error, Result};
use crate::polyjet::{random_poly_with, seeded_rng, ComplexPoly, MultiPoly};
use crate::seeds::derive_seed;

pub const POINTS_PER_INSTANCE: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityKind {
    Ode,
    Multiplier,
    Deterministic,
    StochParabolicDrift,
    StochHyperbolicDrift,
}

impl IdentityKind {
    pub const ALL: [IdentityKind; 5] = [
        Self::Ode,
        Self::Multiplier,
        Self::Deterministic,
        Self::StochParabolicDrift,
        Self::StochHyperbolicDrift,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ode => "ode",
            Self::Multiplier => "multiplier",
            Self::Deterministic => "deterministic",
            Self::StochParabolicDrift => "stoch_parabolic_drift",
            Self::StochHyperbolicDrift => "stoch_hyperbolic_drift",
        }
    }

    /// Default relative tolerance for the kind.
    pub fn default_tolerance(self) -> f64 {
        match self {
            Self::Ode => 1e-12,
            Self::Multiplier => 1e-11,
            Self::Deterministic => 1e-9,
            Self::StochParabolicDrift | Self::StochHyperbolicDrift => 1e-9,
        }
    }
}

impl fmt::Display for IdentityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IdentityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown identity kind '{s}'")))
    }
}

/// Residual statistics of a verification run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub kind: IdentityKind,
    pub samples: usize,
    pub max_abs_residual: f64,
    /// Residual divided by `max(|lhs|, |rhs|, 1)`.
    pub max_rel_residual: f64,
    /// Largest side magnitude encountered.
    pub scale: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Copy, Default)]
struct Stats {
    samples: usize,
    max_abs: f64,
    max_rel: f64,
    scale: f64,
}

impl Stats {
    fn push(&mut self, lhs: f64, rhs: f64) {
        let r = (lhs - rhs).abs();
        let s = lhs.abs().max(rhs.abs());
        self.samples += 1;
        // NaN must fail the run, so propagate it explicitly
        self.max_abs = if r.is_nan() {
            f64::NAN
        } else {
            self.max_abs.max(r)
        };
        self.max_rel = if r.is_nan() {
            f64::NAN
        } else {
            self.max_rel.max(r / s.max(1.0))
        };
        self.scale = self.scale.max(s);
    }

    fn merge(mut self, o: Stats) -> Stats {
        self.samples += o.samples;
        self.max_abs = if o.max_abs.is_nan() {
            o.max_abs
        } else {
            self.max_abs.max(o.max_abs)
        };
        self.max_rel = if o.max_rel.is_nan() {
            o.max_rel
        } else {
            self.max_rel.max(o.max_rel)
        };
        self.scale = self.scale.max(o.scale);
        self
    }
}

fn symmetric_matrix(
    rng: &mut Xoshiro256StarStar,
    m: usize,
    degree: usize,
    range: (f64, f64),
) -> Vec<Vec<MultiPoly>> {
    let d = m + 1;
    let mut b = vec![vec![MultiPoly::zero(d); m]; m];
    for i in 0..m {
        for j in i..m {
            let p = random_poly_with(rng, d, degree, range).expect("valid caps");
            b[i][j] = p.clone();
            b[j][i] = p;
        }
    }
    b
}

fn sample_point(rng: &mut Xoshiro256StarStar, dims: usize) -> Vec<f64> {
    (0..dims).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// Random instance of the deterministic identity: degree-3 complex `z`, degree-2 `ℓ`, `α`, `β`, `b`.
pub fn random_det_instance(seed: u64, m: usize) -> Result<DetIdentityInstance> {
    if !(1..=3).contains(&m) {
        return arg("space dimension must be 1, 2 or 3");
    }
    let d = m + 1;
    let mut rng = seeded_rng(seed);
    let z = ComplexPoly::new(
        random_poly_with(&mut rng, d, 3, (-1.0, 1.0))?,
        random_poly_with(&mut rng, d, 3, (-1.0, 1.0))?,
    )?;
    let ell = random_poly_with(&mut rng, d, 2, (-0.5, 0.5))?;
    let alpha = random_poly_with(&mut rng, d, 2, (-1.0, 1.0))?;
    let beta = random_poly_with(&mut rng, d, 2, (-1.0, 1.0))?;
    let b = symmetric_matrix(&mut rng, m, 2, (-1.0, 1.0));
    let a_p = rng.random_range(-2.0..=2.0);
    let b_p = rng.random_range(-2.0..=2.0);
    let lam = rng.random_range(-2.0..=2.0);
    DetIdentityInstance::new(z, ell, alpha, beta, b, a_p, b_p, lam)
}

/// Random drift-only instance of the stochastic identities.
pub fn random_stoch_drift_instance(seed: u64, m: usize) -> Result<StochIdentityInstance> {
    if !(1..=3).contains(&m) {
        return arg("space dimension must be 1, 2 or 3");
    }
    let d = m + 1;
    let mut rng = seeded_rng(seed);
    let drift = random_poly_with(&mut rng, d, 3, (-1.0, 1.0))?;
    let ell = random_poly_with(&mut rng, d, 2, (-0.5, 0.5))?;
    let psi = random_poly_with(&mut rng, d, 2, (-1.0, 1.0))?;
    let b = symmetric_matrix(&mut rng, m, 2, (-1.0, 1.0));
    StochIdentityInstance::with_increments(drift, MultiPoly::zero(d), ell, psi, b, 1.0, vec![0.0])
}

fn run_instance(kind: IdentityKind, seed: u64) -> Result<Stats> {
    let mut rng = seeded_rng(seed);
    let m: usize = rng.random_range(1..=3);
    let mut stats = Stats::default();
    match kind {
        IdentityKind::Ode => {
            let x: Vec<MultiPoly> = (0..m)
                .map(|_| random_poly_with(&mut rng, 1, 3, (-1.0, 1.0)))
                .collect::<Result<_>>()?;
            let lambda = rng.random_range(0.0..=3.0);
            for _ in 0..POINTS_PER_INSTANCE {
                let t = rng.random_range(-1.0..=1.0);
                let (l, r) = eval_ode_identity(lambda, &x, t)?;
                stats.push(l, r);
            }
        }
        IdentityKind::Multiplier => {
            let d = m + 1;
            let z = random_poly_with(&mut rng, d, 3, (-1.0, 1.0))?;
            let h: Vec<MultiPoly> = (0..m)
                .map(|_| random_poly_with(&mut rng, d, 2, (-1.0, 1.0)))
                .collect::<Result<_>>()?;
            for _ in 0..POINTS_PER_INSTANCE {
                let pt = sample_point(&mut rng, d);
                let (l, r) = eval_multiplier_identity(&h, &z, &pt)?;
                stats.push(l, r);
            }
        }
        IdentityKind::Deterministic => {
            let inst = random_det_instance(rng.random(), m)?;
            for _ in 0..POINTS_PER_INSTANCE {
                let pt = sample_point(&mut rng, m + 1);
                let e = eval_det_identity(&inst, &pt)?;
                stats.push(e.lhs, e.rhs);
            }
        }
        IdentityKind::StochParabolicDrift | IdentityKind::StochHyperbolicDrift => {
            let sk = if kind == IdentityKind::StochParabolicDrift {
                StochKind::Parabolic
            } else {
                StochKind::Hyperbolic
            };
            let inst = random_stoch_drift_instance(rng.random(), m)?;
            for _ in 0..POINTS_PER_INSTANCE {
                let pt = sample_point(&mut rng, m + 1);
                let (l, r) = eval_stoch_pointwise(&inst, sk, &pt)?;
                stats.push(l, r);
            }
        }
    }
    Ok(stats)
}

/// Runs `n_instances` random instances of `kind`, each at 100 points of `[-1,1]^{1+m}`.
///
/// Instance `i` draws from the stream `derive_seed(seed, kind.name(), i)`, so the
/// report does not depend on how the instances are scheduled across threads.
pub fn verify_identity_suite(
    kind: IdentityKind,
    n_instances: usize,
    seed: u64,
    tol: f64,
) -> Result<IdentityReport> {
    let per: Vec<Stats> = (0..n_instances)
        .into_par_iter()
        .map(|i| run_instance(kind, derive_seed(seed, kind.name(), i as u64)))
        .collect::<Result<_>>()?;
    let total = per.into_iter().fold(Stats::default(), Stats::merge);
    Ok(IdentityReport {
        kind,
        samples: total.samples,
        max_abs_residual: total.max_abs,
        max_rel_residual: total.max_rel,
        scale: total.scale,
        tolerance: tol,
        pass: total.max_rel <= tol,
    })
}

/// Same as [`verify_identity_suite`] with the kind given by name.
pub fn verify_identity_suite_named(
    kind: &str,
    n_instances: usize,
    seed: u64,
    tol: f64,
) -> Result<IdentityReport> {
    verify_identity_suite(kind.parse()?, n_instances, seed, tol)
}

/// Residuals of one coefficient slice of the deterministic identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceReport {
    pub slice: DetSlice,
    pub samples: usize,
    pub max_rel_residual: f64,
    /// Largest `i`-carrying term divided by `max(scale, 1)`.
    pub max_rel_i_terms: f64,
    pub tolerance: f64,
    pub i_tolerance: f64,
    pub pass: bool,
}

/// Runs `n_instances` random deterministic instances restricted to `slice`, 100 points each.
/// Instance `i` uses the stream `derive_seed(seed, slice.name(), i)`.
pub fn verify_det_slice(
    slice: DetSlice,
    n_instances: usize,
    seed: u64,
    tol: f64,
    i_tol: f64,
) -> Result<SliceReport> {
    let per: Vec<(usize, f64, f64)> = (0..n_instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeded_rng(derive_seed(seed, slice.name(), i as u64));
            let m: usize = rng.random_range(1..=3);
            let inst = random_det_instance(rng.random(), m)?.slice(slice);
            let (mut rel, mut it) = (0.0f64, 0.0f64);
            for _ in 0..POINTS_PER_INSTANCE {
                let e = eval_det_identity(&inst, &sample_point(&mut rng, m + 1))?;
                let r = (e.lhs - e.rhs).abs() / e.lhs.abs().max(e.rhs.abs()).max(1.0);
                rel = if r.is_nan() { f64::NAN } else { rel.max(r) };
                it = it.max(e.intermediates.i_terms / e.intermediates.scale.max(1.0));
            }
            Ok((POINTS_PER_INSTANCE, rel, it))
        })
        .collect::<Result<_>>()?;
    let samples = per.iter().map(|p| p.0).sum();
    let max_rel = per.iter().fold(0.0f64, |m, p| {
        if p.1.is_nan() || m.is_nan() {
            f64::NAN
        } else {
            m.max(p.1)
        }
    });
    let max_it = per.iter().fold(0.0f64, |m, p| m.max(p.2));
    Ok(SliceReport {
        slice,
        samples,
        max_rel_residual: max_rel,
        max_rel_i_terms: max_it,
        tolerance: tol,
        i_tolerance: i_tol,
        pass: max_rel <= tol && max_it <= i_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_run_passes_vacuously() {
        let r = verify_identity_suite(IdentityKind::Deterministic, 0, 3, 1e-9).unwrap();
        assert_eq!(r.samples, 0);
        assert!(r.pass);
    }

    #[test]
    fn unknown_kind_rejected() {
        assert!(verify_identity_suite_named("parabolic", 1, 0, 1.0).is_err());
    }

    #[test]
    fn kinds_roundtrip_through_names() {
        for k in IdentityKind::ALL {
            assert_eq!(k.name().parse::<IdentityKind>().unwrap(), k);
        }
    }
}
