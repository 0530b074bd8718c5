use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use rand::{RngExt, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

use crate::error::{arg, Error, Result};

use super::jet::{Jet, JetSpace};

/// Largest total degree accepted by [`random_poly`].
pub const DEGREE_CAP: usize = 4;
/// Largest variable count accepted by [`random_poly`] (time plus three space variables).
pub const DIMS_CAP: usize = 4;

/// Exponent multi-index; entry 0 is the power of `t`, entries `1..` the powers of `x_1..x_m`.
pub type Exponent = Vec<u32>;

/// A real multivariate polynomial in `(t, x_1, .., x_m)` kept in canonical form:
/// no stored coefficient is exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiPoly {
    dims: usize,
    terms: BTreeMap<Exponent, f64>,
}

impl MultiPoly {
    pub fn zero(dims: usize) -> Self {
        Self {
            dims,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dims: usize, c: f64) -> Self {
        let mut p = Self::zero(dims);
        p.add_term(vec![0; dims], c);
        p
    }

    /// The coordinate function of variable `axis`.
    pub fn var(dims: usize, axis: usize) -> Self {
        assert!(axis < dims, "variable {axis} out of range for {dims} dims");
        let mut e = vec![0; dims];
        e[axis] = 1;
        Self::monomial(e, 1.0)
    }

    pub fn monomial(exps: Exponent, c: f64) -> Self {
        let mut p = Self::zero(exps.len());
        p.add_term(exps, c);
        p
    }

    /// Builds a polynomial from `(exponent, coefficient)` pairs, merging duplicates.
    pub fn from_terms(
        dims: usize,
        terms: impl IntoIterator<Item = (Exponent, f64)>,
    ) -> Result<Self> {
        let mut p = Self::zero(dims);
        for (e, c) in terms {
            if e.len() != dims {
                return arg(format!(
                    "exponent of length {} in a {dims}-variable polynomial",
                    e.len()
                ));
            }
            p.add_term(e, c);
        }
        Ok(p)
    }

    fn add_term(&mut self, e: Exponent, c: f64) {
        if c == 0.0 {
            return;
        }
        match self.terms.entry(e) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == 0.0 {
                    o.remove();
                }
            }
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, f64)> {
        self.terms.iter().map(|(e, c)| (e, *c))
    }

    pub fn coeff(&self, e: &[u32]) -> f64 {
        self.terms.get(e).copied().unwrap_or(0.0)
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| e.iter().sum()).max()
    }

    /// Degree in a single variable; `None` for the zero polynomial.
    pub fn degree_in(&self, axis: usize) -> Option<u32> {
        self.terms.keys().map(|e| e[axis]).max()
    }

    /// Exact partial derivative along `axis`.
    pub fn differentiate(&self, axis: usize) -> Result<Self> {
        if axis >= self.dims {
            return arg(format!(
                "axis {axis} out of range for a {}-variable polynomial",
                self.dims
            ));
        }
        let mut out = Self::zero(self.dims);
        for (e, c) in &self.terms {
            let k = e[axis];
            if k == 0 {
                continue;
            }
            let mut d = e.clone();
            d[axis] = k - 1;
            out.add_term(d, c * k as f64);
        }
        Ok(out)
    }

    /// Evaluates by nested Horner recursion, outermost variable first.
    pub fn evaluate(&self, pt: &[f64]) -> Result<f64> {
        if pt.len() != self.dims {
            return arg(format!(
                "point of dimension {} for a {}-variable polynomial",
                pt.len(),
                self.dims
            ));
        }
        let terms: Vec<(&[u32], f64)> =
            self.terms.iter().map(|(e, c)| (e.as_slice(), *c)).collect();
        Ok(horner(&terms, pt, 0))
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero(self.dims);
        for (e, c) in &self.terms {
            out.add_term(e.clone(), c * s);
        }
        out
    }

    /// Taylor jet of this polynomial about `pt`, truncated at the space's order.
    pub fn taylor(&self, space: &std::sync::Arc<JetSpace>, pt: &[f64]) -> Result<Jet> {
        if pt.len() != self.dims || space.dims() != self.dims {
            return arg("dimension mismatch between polynomial, jet space and point");
        }
        let mut jet = Jet::zero(space);
        let order = space.order();
        for (e, &c) in &self.terms {
            // (pt + δ)^e = Π_k Σ_{j_k} C(e_k, j_k) pt_k^{e_k - j_k} δ_k^{j_k}
            let mut idx = vec![0u32; self.dims];
            'odometer: loop {
                let deg: u32 = idx.iter().sum();
                if deg as usize <= order {
                    let mut w = c;
                    for k in 0..self.dims {
                        w *= binomial(e[k], idx[k]) * pt[k].powi((e[k] - idx[k]) as i32);
                    }
                    jet.add_at(&idx, w);
                }
                for k in 0..self.dims {
                    if idx[k] < e[k] {
                        idx[k] += 1;
                        continue 'odometer;
                    }
                    idx[k] = 0;
                }
                break;
            }
        }
        Ok(jet)
    }

    /// Writes one term per line as `e0 e1 ... ek : coeff` with 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (e, c) in &self.terms {
            let exps: Vec<String> = e.iter().map(|k| k.to_string()).collect();
            s.push_str(&format!("{} : {:.16e}\n", exps.join(" "), c));
        }
        s
    }

    /// Parses the format written by [`MultiPoly::to_text`]; blank lines and `#` comments are skipped.
    pub fn from_text(dims: usize, text: &str) -> Result<Self> {
        let mut p = Self::zero(dims);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (lhs, rhs) = line.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno + 1,
                msg: "missing ':' separator".into(),
            })?;
            let exps = lhs
                .split_whitespace()
                .map(|tok| tok.parse::<u32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    line: lineno + 1,
                    msg: e.to_string(),
                })?;
            if exps.len() != dims {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected {dims} exponents, found {}", exps.len()),
                });
            }
            let c: f64 =
                rhs.trim()
                    .parse()
                    .map_err(|e: std::num::ParseFloatError| Error::Parse {
                        line: lineno + 1,
                        msg: e.to_string(),
                    })?;
            p.add_term(exps, c);
        }
        Ok(p)
    }
}

fn horner(terms: &[(&[u32], f64)], pt: &[f64], axis: usize) -> f64 {
    if terms.is_empty() {
        return 0.0;
    }
    if axis == pt.len() {
        return terms.iter().map(|(_, c)| c).sum();
    }
    // Terms are lexicographically sorted, so equal powers of `axis` are contiguous
    // once the higher axes are fixed; group by the power of this variable.
    let max_pow = terms.iter().map(|(e, _)| e[axis]).max().unwrap_or(0);
    let mut acc = 0.0;
    for k in (0..=max_pow).rev() {
        let group: Vec<(&[u32], f64)> = terms
            .iter()
            .filter(|(e, _)| e[axis] == k)
            .copied()
            .collect();
        acc = acc * pt[axis] + horner(&group, pt, axis + 1);
    }
    acc
}

fn binomial(n: u32, k: u32) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

impl fmt::Display for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}")?;
            for (k, p) in e.iter().enumerate() {
                let name = if k == 0 {
                    "t".to_string()
                } else {
                    format!("x{k}")
                };
                match p {
                    0 => {}
                    1 => write!(f, "·{name}")?,
                    _ => write!(f, "·{name}^{p}")?,
                }
            }
        }
        Ok(())
    }
}

impl Add for &MultiPoly {
    type Output = MultiPoly;
    fn add(self, rhs: &MultiPoly) -> MultiPoly {
        assert_eq!(self.dims, rhs.dims, "dims mismatch in polynomial sum");
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), *c);
        }
        out
    }
}

impl Sub for &MultiPoly {
    type Output = MultiPoly;
    fn sub(self, rhs: &MultiPoly) -> MultiPoly {
        assert_eq!(
            self.dims, rhs.dims,
            "dims mismatch in polynomial difference"
        );
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), -*c);
        }
        out
    }
}

impl Mul for &MultiPoly {
    type Output = MultiPoly;
    fn mul(self, rhs: &MultiPoly) -> MultiPoly {
        assert_eq!(self.dims, rhs.dims, "dims mismatch in polynomial product");
        let mut acc: BTreeMap<Exponent, f64> = BTreeMap::new();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                let e: Exponent = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                *acc.entry(e).or_insert(0.0) += ca * cb;
            }
        }
        acc.retain(|_, c| *c != 0.0);
        MultiPoly {
            dims: self.dims,
            terms: acc,
        }
    }
}

impl Neg for &MultiPoly {
    type Output = MultiPoly;
    fn neg(self) -> MultiPoly {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for MultiPoly {
            type Output = MultiPoly;
            fn $m(self, rhs: MultiPoly) -> MultiPoly {
                (&self).$m(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

/// A complex polynomial stored as real and imaginary parts with equal variable counts.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexPoly {
    pub re: MultiPoly,
    pub im: MultiPoly,
}

impl ComplexPoly {
    pub fn new(re: MultiPoly, im: MultiPoly) -> Result<Self> {
        if re.dims() != im.dims() {
            return arg("real and imaginary parts have different variable counts");
        }
        Ok(Self { re, im })
    }

    pub fn real(re: MultiPoly) -> Self {
        let dims = re.dims();
        Self {
            re,
            im: MultiPoly::zero(dims),
        }
    }

    pub fn zero(dims: usize) -> Self {
        Self::real(MultiPoly::zero(dims))
    }

    pub fn dims(&self) -> usize {
        self.re.dims()
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn conj(&self) -> Self {
        Self {
            re: self.re.clone(),
            im: -&self.im,
        }
    }

    pub fn differentiate(&self, axis: usize) -> Result<Self> {
        Ok(Self {
            re: self.re.differentiate(axis)?,
            im: self.im.differentiate(axis)?,
        })
    }

    pub fn evaluate(&self, pt: &[f64]) -> Result<(f64, f64)> {
        Ok((self.re.evaluate(pt)?, self.im.evaluate(pt)?))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            re: self.re.scale(s),
            im: self.im.scale(s),
        }
    }
}

/// Evaluation point `(t, x_1, .., x_m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePoint {
    coords: Vec<f64>,
}

impl SamplePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return arg("sample point has a non-finite coordinate");
        }
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dims(&self) -> usize {
        self.coords.len()
    }
}

/// Xoshiro256** stream for an explicit 64-bit seed.
///
/// The generator state is expanded from the seed with SplitMix64 (the reference
/// seeding procedure), so a seed yields the same sequence on every platform.
pub fn seeded_rng(seed: u64) -> Xoshiro256StarStar {
    Xoshiro256StarStar::seed_from_u64(seed)
}

/// All exponents of total degree `<= degree` in `dims` variables, graded then lexicographic.
pub fn monomials_up_to(dims: usize, degree: usize) -> Vec<Exponent> {
    let mut out = Vec::new();
    for d in 0..=degree {
        let mut cur = vec![0u32; dims];
        fill_degree(&mut cur, 0, d as u32, &mut out);
    }
    out
}

fn fill_degree(cur: &mut Exponent, pos: usize, remaining: u32, out: &mut Vec<Exponent>) {
    if pos + 1 == cur.len() {
        cur[pos] = remaining;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for k in (0..=remaining).rev() {
        cur[pos] = k;
        fill_degree(cur, pos + 1, remaining - k, out);
    }
    cur[pos] = 0;
}

/// Random polynomial with every monomial of total degree `<= degree` drawn uniformly
/// from `[lo, hi]`, in graded order from one Xoshiro256** stream.
pub fn random_poly(
    dims: usize,
    degree: usize,
    seed: u64,
    coeff_range: (f64, f64),
) -> Result<MultiPoly> {
    let mut rng = seeded_rng(seed);
    random_poly_with(&mut rng, dims, degree, coeff_range)
}

/// As [`random_poly`], drawing from a caller-owned stream.
pub fn random_poly_with(
    rng: &mut Xoshiro256StarStar,
    dims: usize,
    degree: usize,
    (lo, hi): (f64, f64),
) -> Result<MultiPoly> {
    if dims == 0 || dims > DIMS_CAP {
        return arg(format!("dims must lie in 1..={DIMS_CAP}, got {dims}"));
    }
    if degree > DEGREE_CAP {
        return arg(format!("degree {degree} exceeds the cap {DEGREE_CAP}"));
    }
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return arg(format!(
            "empty or non-finite coefficient range [{lo}, {hi}]"
        ));
    }
    let mut p = MultiPoly::zero(dims);
    for e in monomials_up_to(dims, degree) {
        let c = if lo == hi {
            lo
        } else {
            rng.random_range(lo..=hi)
        };
        p.add_term(e, c);
    }
    Ok(p)
}
