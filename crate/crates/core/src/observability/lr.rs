//! Spectral-inequality constants `Σ|aᵢ|² ≤ C ∫_ω |Σ aᵢφᵢ|²` for Dirichlet eigenfunctions of the
//! unit interval or square, computed in multiple precision.

use std::f64::consts::PI;

use astro_float::{BigFloat, Consts, RoundingMode, Sign};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::linalg::fit_line;

const RM: RoundingMode = RoundingMode::ToEven;

/// How the modes are selected.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LrCutoff {
    /// The first `K` modes by eigenvalue (ties broken by index).
    Modes(usize),
    /// All modes with `μ ≤ r`.
    Frequency(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LRSpectrum {
    /// Frequency cutoff: the largest included eigenvalue for [`LrCutoff::Modes`].
    pub r: f64,
    /// Mode indices, one entry per axis.
    pub modes: Vec<Vec<usize>>,
    pub mu: Vec<f64>,
    /// `∫_ω φᵢφⱼ`, rounded to `f64`.
    pub gram: Vec<Vec<f64>>,
    pub lambda_min: f64,
    /// `1 / lambda_min`.
    pub constant: f64,
    /// Working precision in bits.
    pub precision: usize,
}

struct Hp {
    p: usize,
    cc: Consts,
}

impl Hp {
    fn new(p: usize) -> Result<Self> {
        let cc = Consts::new()
            .map_err(|e| Error::Argument(format!("multiple-precision constants: {e:?}")))?;
        Ok(Self { p, cc })
    }

    fn num(&self, x: f64) -> BigFloat {
        BigFloat::from_f64(x, self.p)
    }

    fn add(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.add(b, self.p, RM)
    }

    fn sub(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.sub(b, self.p, RM)
    }

    fn mul(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.mul(b, self.p, RM)
    }

    fn div(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.div(b, self.p, RM)
    }
}

fn to_f64(x: &BigFloat) -> f64 {
    match x.as_raw_parts() {
        Some((m, _, sign, e, _)) => {
            let top = m.last().copied().unwrap_or(0) as f64;
            let next = if m.len() > 1 {
                m[m.len() - 2] as f64
            } else {
                0.0
            };
            let mant = (top + next / 2f64.powi(64)) / 2f64.powi(64);
            let v = mant * 2f64.powi(e);
            if sign == Sign::Neg {
                -v
            } else {
                v
            }
        }
        None => f64::NAN,
    }
}

/// `∫_a^b 2 sin(iπx) sin(jπx) dx` for `i, j = 1..=k`.
fn gram_1d(hp: &mut Hp, a: f64, b: f64, k: usize) -> Vec<Vec<BigFloat>> {
    let pi = hp.cc.pi(hp.p, RM);
    let (ba, bb) = (hp.num(a), hp.num(b));
    // s[m] = (sin(mπb) - sin(mπa)) / (mπ)
    let s: Vec<BigFloat> = (0..=2 * k)
        .map(|m| {
            if m == 0 {
                return hp.sub(&bb, &ba);
            }
            let mpi = hp.mul(&BigFloat::from_u64(m as u64, hp.p), &pi);
            let xb = hp.mul(&mpi, &bb);
            let xa = hp.mul(&mpi, &ba);
            let sb = xb.sin(hp.p, RM, &mut hp.cc);
            let sa = xa.sin(hp.p, RM, &mut hp.cc);
            hp.div(&hp.sub(&sb, &sa), &mpi)
        })
        .collect();
    (1..=k)
        .map(|i| {
            (1..=k)
                .map(|j| hp.sub(&s[i.abs_diff(j)], &s[i + j]))
                .collect()
        })
        .collect()
}

/// Householder reduction of a symmetric matrix to tridiagonal form `(diagonal, off-diagonal)`.
fn tridiagonalize(hp: &Hp, mut a: Vec<Vec<BigFloat>>) -> (Vec<BigFloat>, Vec<BigFloat>) {
    let n = a.len();
    let zero = hp.num(0.0);
    let two = hp.num(2.0);
    for k in 0..n.saturating_sub(2) {
        let mut v: Vec<BigFloat> = (k + 1..n).map(|i| a[i][k].clone()).collect();
        let norm2 = v
            .iter()
            .fold(zero.clone(), |s, x| hp.add(&s, &hp.mul(x, x)));
        if norm2.is_zero() {
            continue;
        }
        let norm = norm2.sqrt(hp.p, RM);
        let alpha = if v[0].is_negative() { norm } else { norm.neg() };
        v[0] = hp.sub(&v[0], &alpha);
        let vtv = v
            .iter()
            .fold(zero.clone(), |s, x| hp.add(&s, &hp.mul(x, x)));
        if vtv.is_zero() {
            continue;
        }
        let m = v.len();
        let scale = hp.div(&two, &vtv);
        let p: Vec<BigFloat> = (0..m)
            .map(|i| {
                let row = &a[k + 1 + i];
                let dot = (0..m).fold(zero.clone(), |s, j| {
                    hp.add(&s, &hp.mul(&row[k + 1 + j], &v[j]))
                });
                hp.mul(&dot, &scale)
            })
            .collect();
        let vp = (0..m).fold(zero.clone(), |s, j| hp.add(&s, &hp.mul(&v[j], &p[j])));
        let kk = hp.div(&vp, &vtv);
        let w: Vec<BigFloat> = (0..m).map(|i| hp.sub(&p[i], &hp.mul(&kk, &v[i]))).collect();
        for i in 0..m {
            for j in 0..=i {
                let d = hp.add(&hp.mul(&v[i], &w[j]), &hp.mul(&w[i], &v[j]));
                let x = hp.sub(&a[k + 1 + i][k + 1 + j], &d);
                a[k + 1 + j][k + 1 + i] = x.clone();
                a[k + 1 + i][k + 1 + j] = x;
            }
        }
        a[k + 1][k] = alpha.clone();
        a[k][k + 1] = alpha;
        for i in k + 2..n {
            a[i][k] = zero.clone();
            a[k][i] = zero.clone();
        }
    }
    let d = (0..n).map(|i| a[i][i].clone()).collect();
    let e = (0..n.saturating_sub(1))
        .map(|i| a[i + 1][i].clone())
        .collect();
    (d, e)
}

/// Number of eigenvalues of the tridiagonal matrix below `x` (Sturm sequence).
fn count_below(hp: &Hp, d: &[BigFloat], e2: &[BigFloat], x: &BigFloat) -> usize {
    let tiny = BigFloat::min_positive_normal(hp.p);
    let mut count = 0;
    let mut q = hp.num(1.0);
    for i in 0..d.len() {
        let mut next = hp.sub(&d[i], x);
        if i > 0 {
            next = hp.sub(&next, &hp.div(&e2[i - 1], &q));
        }
        if next.is_zero() {
            next = tiny.clone();
        }
        if next.is_negative() {
            count += 1;
        }
        q = next;
    }
    count
}

/// Smallest eigenvalue by bisection, or `None` when it falls below what precision `p` resolves.
fn lambda_min_tridiagonal(hp: &Hp, d: &[BigFloat], e: &[BigFloat]) -> Option<f64> {
    let e2: Vec<BigFloat> = e.iter().map(|x| hp.mul(x, x)).collect();
    if count_below(hp, d, &e2, &hp.num(0.0)) > 0 {
        return None;
    }
    let floor = 64i32 - hp.p as i32;
    let bound = (0..d.len())
        .map(|i| {
            let left = if i > 0 { to_f64(&e[i - 1]).abs() } else { 0.0 };
            let right = e.get(i).map_or(0.0, |x| to_f64(x).abs());
            to_f64(&d[i]).abs() + left + right
        })
        .fold(1.0, f64::max);
    let mut exp = bound.log2().ceil() as i32 + 1;
    let mut hi = hp.num(2f64.powi(exp));
    let half = hp.num(0.5);
    loop {
        let next = hp.mul(&hi, &half);
        if count_below(hp, d, &e2, &next) == 0 {
            break;
        }
        hi = next;
        exp -= 1;
        if exp < floor {
            return None;
        }
    }
    let mut lo = hp.mul(&hi, &half);
    for _ in 0..64 {
        let mid = hp.mul(&hp.add(&lo, &hi), &half);
        if count_below(hp, d, &e2, &mid) == 0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(to_f64(&hp.mul(&hp.add(&lo, &hi), &half)))
}

fn select_modes(dim: usize, cutoff: LrCutoff) -> Result<Vec<Vec<usize>>> {
    let mu = |m: &[usize]| PI * PI * m.iter().map(|k| (k * k) as f64).sum::<f64>();
    let mut modes: Vec<Vec<usize>> = match (dim, cutoff) {
        (1, LrCutoff::Modes(k)) => (1..=k).map(|i| vec![i]).collect(),
        (1, LrCutoff::Frequency(r)) => (1..).map(|i| vec![i]).take_while(|m| mu(m) <= r).collect(),
        (2, c) => {
            let r = match c {
                LrCutoff::Modes(k) => PI * PI * ((k * k + 1) as f64),
                LrCutoff::Frequency(r) => r,
            };
            let top = (r.max(0.0).sqrt() / PI) as usize + 1;
            let mut all: Vec<Vec<usize>> = (1..=top)
                .flat_map(|i| (1..=top).map(move |j| vec![i, j]))
                .filter(|m| mu(m) <= r)
                .collect();
            all.sort_by(|a, b| mu(a).total_cmp(&mu(b)).then(a.cmp(b)));
            if let LrCutoff::Modes(k) = c {
                all.truncate(k);
            }
            all
        }
        _ => return arg("only one- and two-dimensional spectra are supported"),
    };
    if modes.is_empty() {
        return arg("the cutoff selects no modes");
    }
    modes.shrink_to_fit();
    Ok(modes)
}

/// Gram matrix `∫_ω φᵢφⱼ` of the Dirichlet eigenfunctions `√2 sin(iπx)` (tensor products in 2D)
/// on the box `ω = Π (lo_a, hi_a) ⊆ (0,1)^d`, and its smallest eigenvalue.
///
/// Entries come from closed-form sine integrals; the matrix is tridiagonalized by Householder
/// reflections and `λ_min` is found by Sturm bisection, all in binary floating point whose
/// precision is doubled until `λ_min` is resolved.
pub fn lr_gram_constant(cutoff: LrCutoff, lo: &[f64], hi: &[f64]) -> Result<LRSpectrum> {
    let dim = lo.len();
    if dim != hi.len() || !(1..=2).contains(&dim) {
        return arg("omega must be an interval or a rectangle");
    }
    if lo
        .iter()
        .zip(hi)
        .any(|(a, b)| !(*a >= 0.0 && *b <= 1.0 && a < b))
    {
        return arg("omega must be a box of positive measure inside the unit domain");
    }
    let modes = select_modes(dim, cutoff)?;
    let mu: Vec<f64> = modes
        .iter()
        .map(|m| PI * PI * m.iter().map(|k| (k * k) as f64).sum::<f64>())
        .collect();
    let top = modes.iter().flatten().copied().max().unwrap_or(1);
    let mut p = 256;
    loop {
        let mut hp = Hp::new(p)?;
        let axes: Vec<Vec<Vec<BigFloat>>> = (0..dim)
            .map(|a| gram_1d(&mut hp, lo[a], hi[a], top))
            .collect();
        let gram: Vec<Vec<BigFloat>> = modes
            .iter()
            .map(|mi| {
                modes
                    .iter()
                    .map(|mj| {
                        (1..dim).fold(axes[0][mi[0] - 1][mj[0] - 1].clone(), |acc, a| {
                            hp.mul(&acc, &axes[a][mi[a] - 1][mj[a] - 1])
                        })
                    })
                    .collect()
            })
            .collect();
        let gram64: Vec<Vec<f64>> = gram
            .iter()
            .map(|r| r.iter().map(to_f64).collect())
            .collect();
        let (d, e) = tridiagonalize(&hp, gram);
        if let Some(lambda_min) = lambda_min_tridiagonal(&hp, &d, &e) {
            return Ok(LRSpectrum {
                r: match cutoff {
                    LrCutoff::Frequency(r) => r,
                    LrCutoff::Modes(_) => mu[mu.len() - 1],
                },
                modes,
                mu,
                gram: gram64,
                lambda_min,
                constant: 1.0 / lambda_min,
                precision: p,
            });
        }
        if p >= 8192 {
            return Err(Error::Singular(
                "the Gram matrix is singular beyond 8192-bit precision".into(),
            ));
        }
        p *= 2;
    }
}

/// Least-squares fit of `ln C(r)` against `√r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub r: Vec<f64>,
    pub constants: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn lr_growth_fit(lo: &[f64], hi: &[f64], r_values: &[f64]) -> Result<GrowthFit> {
    let mut r: Vec<f64> = r_values.to_vec();
    r.sort_by(f64::total_cmp);
    r.dedup();
    if r.len() < 4 {
        return arg("the growth fit needs at least four distinct cutoffs");
    }
    let constants: Vec<f64> = r
        .par_iter()
        .map(|x| lr_gram_constant(LrCutoff::Frequency(*x), lo, hi).map(|s| s.constant))
        .collect::<Result<_>>()?;
    let x: Vec<f64> = r.iter().map(|v| v.sqrt()).collect();
    let y: Vec<f64> = constants.iter().map(|c| c.ln()).collect();
    let fit = fit_line(&x, &y);
    Ok(GrowthFit {
        r,
        constants,
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
    })
}
