//! Truncated multivariate Taylor jets.
//!
//! A [`Jet`] of order `k` about a point `p` stores the Taylor coefficients
//! `c_α = ∂^α f(p) / α!` for every multi-index with `|α| <= k`. Sums, products
//! and `exp` act on the coefficients in closed form, and differentiation shifts
//! coefficients down one order, so every derivative of a composite expression
//! is exact up to floating-point round-off.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

/// Index tables shared by all jets with the same variable count and maximum order.
#[derive(Debug)]
pub struct JetSpace {
    dims: usize,
    order: usize,
    /// Multi-indices in graded order, so the jets of order `k` form a prefix.
    indices: Vec<Vec<u32>>,
    /// `prefix[k]` = number of multi-indices with `|α| <= k`.
    prefix: Vec<usize>,
    lookup: Vec<usize>,
    /// Product contributions `(i, j, out)`, sorted by `|out|`.
    mul_pairs: Vec<(u32, u32, u32)>,
    /// `mul_prefix[k]` = number of product contributions with `|out| <= k`.
    mul_prefix: Vec<usize>,
    /// `shift[axis][β]` = index of `β + e_axis` (only meaningful for `|β| < order`).
    shift: Vec<Vec<usize>>,
}

impl JetSpace {
    pub fn new(dims: usize, order: usize) -> Arc<Self> {
        assert!(dims >= 1, "jets need at least one variable");
        let indices = super::poly::monomials_up_to(dims, order);
        let degrees: Vec<usize> = indices
            .iter()
            .map(|e| e.iter().sum::<u32>() as usize)
            .collect();
        let mut prefix = vec![0; order + 1];
        for &d in &degrees {
            for p in prefix.iter_mut().skip(d) {
                *p += 1;
            }
        }
        let base = order + 1;
        let mut lookup = vec![usize::MAX; base.pow(dims as u32)];
        for (i, e) in indices.iter().enumerate() {
            lookup[flat(e, base)] = i;
        }
        let mut mul_pairs = Vec::new();
        for (i, ei) in indices.iter().enumerate() {
            for (j, ej) in indices.iter().enumerate() {
                if degrees[i] + degrees[j] > order {
                    continue;
                }
                let e: Vec<u32> = ei.iter().zip(ej).map(|(a, b)| a + b).collect();
                mul_pairs.push((i as u32, j as u32, lookup[flat(&e, base)] as u32));
            }
        }
        mul_pairs.sort_by_key(|&(_, _, k)| degrees[k as usize]);
        let mut mul_prefix = vec![0; order + 1];
        for &(_, _, k) in &mul_pairs {
            for p in mul_prefix.iter_mut().skip(degrees[k as usize]) {
                *p += 1;
            }
        }
        let shift = (0..dims)
            .map(|axis| {
                indices
                    .iter()
                    .map(|e| {
                        let mut up = e.clone();
                        up[axis] += 1;
                        let deg: u32 = up.iter().sum();
                        if deg as usize <= order {
                            lookup[flat(&up, base)]
                        } else {
                            usize::MAX
                        }
                    })
                    .collect()
            })
            .collect();
        Arc::new(Self {
            dims,
            order,
            indices,
            prefix,
            lookup,
            mul_pairs,
            mul_prefix,
            shift,
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn index_of(&self, e: &[u32]) -> Option<usize> {
        let deg: u32 = e.iter().sum();
        if deg as usize > self.order || e.len() != self.dims {
            return None;
        }
        Some(self.lookup[flat(e, self.order + 1)])
    }
}

fn flat(e: &[u32], base: usize) -> usize {
    e.iter().fold(0, |acc, &k| acc * base + k as usize)
}

/// A truncated Taylor expansion about a fixed point.
#[derive(Clone, Debug)]
pub struct Jet {
    space: Arc<JetSpace>,
    order: usize,
    c: Vec<f64>,
}

impl Jet {
    pub fn zero(space: &Arc<JetSpace>) -> Self {
        Self {
            space: space.clone(),
            order: space.order,
            c: vec![0.0; space.prefix[space.order]],
        }
    }

    pub fn constant(space: &Arc<JetSpace>, v: f64) -> Self {
        let mut j = Self::zero(space);
        j.c[0] = v;
        j
    }

    /// The jet of coordinate `axis` about a point whose `axis` coordinate is `at`.
    pub fn variable(space: &Arc<JetSpace>, axis: usize, at: f64) -> Self {
        let mut j = Self::constant(space, at);
        let mut e = vec![0; space.dims];
        e[axis] = 1;
        j.add_at(&e, 1.0);
        j
    }

    pub(crate) fn add_at(&mut self, e: &[u32], w: f64) {
        if let Some(i) = self.space.index_of(e) {
            if i < self.c.len() {
                self.c[i] += w;
            }
        }
    }

    /// Highest order at which the coefficients are still exact.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// The mixed partial derivative `∂^α f` at the expansion point.
    pub fn derivative(&self, alpha: &[u32]) -> f64 {
        match self.space.index_of(alpha) {
            Some(i) if i < self.c.len() => {
                let fact: f64 = alpha
                    .iter()
                    .map(|&k| (1..=k).product::<u32>() as f64)
                    .product();
                self.c[i] * fact
            }
            _ => panic!("derivative {alpha:?} beyond jet order {}", self.order),
        }
    }

    /// Partial derivative along `axis`; the result is exact to one order less.
    pub fn diff(&self, axis: usize) -> Self {
        assert!(self.order >= 1, "cannot differentiate an order-0 jet");
        let order = self.order - 1;
        let n = self.space.prefix[order];
        let shift = &self.space.shift[axis];
        let c = (0..n)
            .map(|b| {
                let k = self.space.indices[b][axis] + 1;
                self.c[shift[b]] * k as f64
            })
            .collect();
        Self {
            space: self.space.clone(),
            order,
            c,
        }
    }

    fn truncated(&self, order: usize) -> &[f64] {
        &self.c[..self.space.prefix[order]]
    }

    fn binary(&self, rhs: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert!(
            Arc::ptr_eq(&self.space, &rhs.space),
            "jets from different spaces"
        );
        let order = self.order.min(rhs.order);
        let c = self
            .truncated(order)
            .iter()
            .zip(rhs.truncated(order))
            .map(|(a, b)| f(*a, *b))
            .collect();
        Self {
            space: self.space.clone(),
            order,
            c,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            space: self.space.clone(),
            order: self.order,
            c: self.c.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add_scalar(&self, s: f64) -> Self {
        let mut j = self.clone();
        j.c[0] += s;
        j
    }

    pub fn square(&self) -> Self {
        self * self
    }

    pub fn exp(&self) -> Self {
        let e0 = self.c[0].exp();
        let mut g = self.clone();
        g.c[0] = 0.0;
        // e^{c0} Σ g^n / n!, with g nilpotent beyond the jet order
        let mut term = Jet::constant(&self.space, 1.0);
        term.order = self.order;
        term.c.truncate(self.space.prefix[self.order]);
        let mut acc = term.clone();
        for n in 1..=self.order {
            term = (&term * &g).scale(1.0 / n as f64);
            acc = &acc + &term;
        }
        acc.scale(e0)
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        self.binary(rhs, |a, b| a + b)
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        self.binary(rhs, |a, b| a - b)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        let order = self.order.min(rhs.order);
        let sp = &self.space;
        let mut c = vec![0.0; sp.prefix[order]];
        for &(i, j, k) in &sp.mul_pairs[..sp.mul_prefix[order]] {
            c[k as usize] += self.c[i as usize] * rhs.c[j as usize];
        }
        Jet {
            space: self.space.clone(),
            order,
            c,
        }
    }
}

macro_rules! owned_ops {
    ($t:ty) => {
        impl Add for $t {
            type Output = $t;
            fn add(self, rhs: $t) -> $t {
                (&self) + (&rhs)
            }
        }
        impl Sub for $t {
            type Output = $t;
            fn sub(self, rhs: $t) -> $t {
                (&self) - (&rhs)
            }
        }
        impl Mul for $t {
            type Output = $t;
            fn mul(self, rhs: $t) -> $t {
                (&self) * (&rhs)
            }
        }
        impl Neg for $t {
            type Output = $t;
            fn neg(self) -> $t {
                -(&self)
            }
        }
    };
}
owned_ops!(Jet);
owned_ops!(CJet);

/// A complex-valued jet, stored as real and imaginary jets.
#[derive(Clone, Debug)]
pub struct CJet {
    pub re: Jet,
    pub im: Jet,
}

impl CJet {
    pub fn new(re: Jet, im: Jet) -> Self {
        Self { re, im }
    }

    pub fn real(re: Jet) -> Self {
        let im = re.scale(0.0);
        Self { re, im }
    }

    pub fn conj(&self) -> Self {
        Self {
            re: self.re.clone(),
            im: -&self.im,
        }
    }

    /// Multiplication by the imaginary unit.
    pub fn times_i(&self) -> Self {
        Self {
            re: -&self.im,
            im: self.re.clone(),
        }
    }

    pub fn diff(&self, axis: usize) -> Self {
        Self {
            re: self.re.diff(axis),
            im: self.im.diff(axis),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            re: self.re.scale(s),
            im: self.im.scale(s),
        }
    }

    /// Product with a real jet.
    pub fn mul_real(&self, r: &Jet) -> Self {
        Self {
            re: &self.re * r,
            im: &self.im * r,
        }
    }

    /// `|self|²` as a real jet.
    pub fn norm_sqr(&self) -> Jet {
        &(&self.re * &self.re) + &(&self.im * &self.im)
    }

    pub fn value(&self) -> (f64, f64) {
        (self.re.value(), self.im.value())
    }
}

impl Add for &CJet {
    type Output = CJet;
    fn add(self, rhs: &CJet) -> CJet {
        CJet {
            re: &self.re + &rhs.re,
            im: &self.im + &rhs.im,
        }
    }
}

impl Sub for &CJet {
    type Output = CJet;
    fn sub(self, rhs: &CJet) -> CJet {
        CJet {
            re: &self.re - &rhs.re,
            im: &self.im - &rhs.im,
        }
    }
}

impl Neg for &CJet {
    type Output = CJet;
    fn neg(self) -> CJet {
        CJet {
            re: -&self.re,
            im: -&self.im,
        }
    }
}

impl Mul for &CJet {
    type Output = CJet;
    fn mul(self, rhs: &CJet) -> CJet {
        CJet {
            re: &(&self.re * &rhs.re) - &(&self.im * &rhs.im),
            im: &(&self.re * &rhs.im) + &(&self.im * &rhs.re),
        }
    }
}
