//! Banded matrices with an unpivoted LU factorization, and Krylov solvers.

use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};

/// A square matrix stored by diagonals `-bw..=bw`.
#[derive(Clone, Debug, PartialEq)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    pub fn identity(n: usize, bw: usize) -> Self {
        let mut m = Self::zeros(n, bw);
        for i in 0..n {
            m.add(i, i, 1.0);
        }
        m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.n || j >= self.n || i.abs_diff(j) > self.bw {
            return None;
        }
        Some(i * (2 * self.bw + 1) + j + self.bw - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Adds `v` to entry `(i, j)`; panics if the entry lies outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i},{j}) outside band {}", self.bw));
        self.data[s] += v;
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            n: self.n,
            bw: self.bw,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    /// `self * s + other * t`, entrywise.
    pub fn combine(&self, s: f64, other: &Self, t: f64) -> Self {
        assert_eq!((self.n, self.bw), (other.n, other.bw), "band shapes differ");
        Self {
            n: self.n,
            bw: self.bw,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| s * a + t * b)
                .collect(),
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.bw);
                let hi = (i + self.bw).min(self.n - 1);
                (lo..=hi)
                    .map(|j| self.data[i * (2 * self.bw + 1) + j + self.bw - i] * x[j])
                    .sum()
            })
            .collect()
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let hi = (i + self.bw).min(self.n - 1);
            for j in lo..=hi {
                y[j] += self.data[i * (2 * self.bw + 1) + j + self.bw - i] * x[i];
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n, self.bw);
        for i in 0..self.n {
            for j in i.saturating_sub(self.bw)..=(i + self.bw).min(self.n - 1) {
                t.add(j, i, self.get(i, j));
            }
        }
        t
    }
}

/// `A = L U` with unit lower `L`, both kept in band storage.
#[derive(Clone, Debug)]
pub struct BandLu {
    lu: BandMatrix,
}

impl BandLu {
    /// Factors without pivoting; fails on a pivot below `1e-14` times the largest entry.
    pub fn factor(a: &BandMatrix) -> Result<Self> {
        let mut lu = a.clone();
        let (n, bw) = (a.n, a.bw);
        let w = 2 * bw + 1;
        let amax = a.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let piv = lu.data[k * w + bw];
            if !(piv.abs() > 1e-14 * amax) {
                return Err(Error::Singular(format!("pivot {piv:e} at row {k} of {n}")));
            }
            let hi = (k + bw).min(n - 1);
            for i in k + 1..=hi {
                let lik = lu.data[i * w + k + bw - i] / piv;
                lu.data[i * w + k + bw - i] = lik;
                if lik != 0.0 {
                    for j in k + 1..=hi {
                        let ukj = lu.data[k * w + j + bw - k];
                        lu.data[i * w + j + bw - i] -= lik * ukj;
                    }
                }
            }
        }
        Ok(Self { lu })
    }

    pub fn size(&self) -> usize {
        self.lu.n
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let (n, bw) = (self.lu.n, self.lu.bw);
        let w = 2 * bw + 1;
        let d = &self.lu.data;
        for i in 0..n {
            let mut s = b[i];
            for j in i.saturating_sub(bw)..i {
                s -= d[i * w + j + bw - i] * b[j];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..=(i + bw).min(n - 1) {
                s -= d[i * w + j + bw - i] * b[j];
            }
            b[i] = s / d[i * w + bw];
        }
    }

    /// Solves `Aᵀ x = b` in place.
    pub fn solve_transpose(&self, b: &mut [f64]) {
        let (n, bw) = (self.lu.n, self.lu.bw);
        let w = 2 * bw + 1;
        let d = &self.lu.data;
        // Uᵀ y = b
        for i in 0..n {
            let mut s = b[i];
            for j in i.saturating_sub(bw)..i {
                s -= d[j * w + i + bw - j] * b[j];
            }
            b[i] = s / d[i * w + bw];
        }
        // Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..=(i + bw).min(n - 1) {
                s -= d[j * w + i + bw - j] * b[j];
            }
            b[i] = s;
        }
    }
}

/// Result of a conjugate-gradient solve.
#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual `|b - A x| / |b|`.
    pub residual: f64,
    pub history: Vec<f64>,
    pub converged: bool,
}

/// Conjugate gradients for an operator that is symmetric positive (semi)definite in the
/// inner product `inner`, starting from zero. Stops when the relative residual drops below
/// `tol` or after `max_iter` iterations; a zero right-hand side returns immediately.
pub fn conjugate_gradient(
    mut apply: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    b: &[f64],
    inner: impl Fn(&[f64], &[f64]) -> f64,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    if !(tol > 0.0) {
        return arg("CG tolerance must be positive");
    }
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = inner(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            residual: 0.0,
            history: vec![],
            converged: true,
        });
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = inner(&r, &r);
    let mut history = vec![1.0];
    let mut iterations = 0;
    while iterations < max_iter {
        let ap = apply(&p)?;
        let pap = inner(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        let rr_new = inner(&r, &r);
        let rel = rr_new.max(0.0).sqrt() / bnorm;
        history.push(rel);
        if rel <= tol {
            rr = rr_new;
            break;
        }
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    let residual = rr.max(0.0).sqrt() / bnorm;
    Ok(CgOutcome {
        x,
        iterations,
        residual,
        history,
        converged: residual <= tol,
    })
}

/// Conjugate residuals for an operator self-adjoint in `inner`, starting from zero. The
/// residual norm decreases monotonically, so on a singular or nearly singular operator the
/// history shows the attainable plateau rather than the oscillations of plain CG.
pub fn conjugate_residual(
    mut apply: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    b: &[f64],
    inner: impl Fn(&[f64], &[f64]) -> f64,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    if !(tol > 0.0) {
        return arg("tolerance must be positive");
    }
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = inner(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            residual: 0.0,
            history: vec![],
            converged: true,
        });
    }
    let mut r = b.to_vec();
    let mut ar = apply(&r)?;
    let mut p = r.clone();
    let mut ap = ar.clone();
    let mut rar = inner(&r, &ar);
    let mut history = vec![1.0];
    let mut rel = 1.0;
    let mut iterations = 0;
    while iterations < max_iter && rel > tol {
        let apap = inner(&ap, &ap);
        if !(apap > 0.0 && rar > 0.0) {
            break;
        }
        let alpha = rar / apap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        rel = inner(&r, &r).max(0.0).sqrt() / bnorm;
        history.push(rel);
        if rel <= tol {
            break;
        }
        ar = apply(&r)?;
        let rar_new = inner(&r, &ar);
        let beta = rar_new / rar;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
            ap[i] = ar[i] + beta * ap[i];
        }
        rar = rar_new;
    }
    Ok(CgOutcome {
        x,
        iterations,
        residual: rel,
        history,
        converged: rel <= tol,
    })
}

/// Least-squares line `y ≈ intercept + slope · x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination clamped to `[0, 1]`; `1` when the data are fitted exactly.
    pub r_squared: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    LineFit {
        slope,
        intercept,
        r_squared: r_squared(y, |i| intercept + slope * x[i]),
    }
}

pub(crate) fn r_squared(y: &[f64], model: impl Fn(usize) -> f64) -> f64 {
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let ss_res: f64 = y
        .iter()
        .enumerate()
        .map(|(i, b)| (b - model(i)).powi(2))
        .sum();
    if ss_res == 0.0 {
        1.0
    } else if ss_tot == 0.0 {
        0.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, bw: usize) -> BandMatrix {
        let mut a = BandMatrix::zeros(n, bw);
        for i in 0..n {
            for j in i.saturating_sub(bw)..=(i + bw).min(n - 1) {
                let v = if i == j {
                    4.0 + i as f64 * 0.1
                } else {
                    ((i * 7 + j * 3) % 5) as f64 * 0.2 - 0.4
                };
                a.add(i, j, v);
            }
        }
        a
    }

    #[test]
    fn lu_solves_and_transposed_solves() {
        let a = sample(12, 3);
        let x: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let mut b = a.matvec(&x);
        let lu = BandLu::factor(&a).unwrap();
        lu.solve(&mut b);
        let mut bt = a.matvec_transpose(&x);
        lu.solve_transpose(&mut bt);
        for i in 0..12 {
            assert!((b[i] - x[i]).abs() < 1e-13);
            assert!((bt[i] - x[i]).abs() < 1e-13);
        }
        assert_eq!(a.transpose().matvec(&x), a.matvec_transpose(&x));
    }

    #[test]
    fn singular_pivot_detected() {
        let a = BandMatrix::zeros(3, 1);
        assert!(matches!(BandLu::factor(&a), Err(Error::Singular(_))));
    }

    #[test]
    fn cg_solves_spd_system() {
        let n = 20;
        let mut a = BandMatrix::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 2.0);
            if i + 1 < n {
                a.add(i, i + 1, -1.0);
                a.add(i + 1, i, -1.0);
            }
        }
        let b = vec![1.0; n];
        let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        let out = conjugate_gradient(|p| Ok(a.matvec(p)), &b, dot, 1e-12, 100).unwrap();
        assert!(out.converged && out.iterations <= n);
        let r = a.matvec(&out.x);
        assert!(r.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-10));
        let cr = conjugate_residual(|p| Ok(a.matvec(p)), &b, dot, 1e-12, 100).unwrap();
        assert!(cr.converged);
        assert!(cr.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(cr.x.iter().zip(&out.x).all(|(u, v)| (u - v).abs() < 1e-9));
    }
}
