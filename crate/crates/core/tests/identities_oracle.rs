//! Independent symbolic oracles for the pointwise identities.
//!
//! The deterministic weighted identity is expanded into finite sums
//! `Σ_k p_k(t,x) e^{kℓ}` with polynomial `p_k`, using only polynomial
//! arithmetic and the rule `∂(p e^{kℓ}) = (∂p + k p ∂ℓ) e^{kℓ}`. No jets are
//! involved, so agreement with the jet evaluator checks both the transcription
//! and the derivative machinery.

use std::collections::BTreeMap;

use pdectl::identities::{
    eval_det_identity, eval_multiplier_identity, eval_ode_identity, DetIdentityInstance,
};
use pdectl::polyjet::{random_poly, random_poly_with, seeded_rng, ComplexPoly, MultiPoly};
use rand::RngExt;

#[derive(Clone)]
struct ExpSum {
    dims: usize,
    terms: BTreeMap<i32, MultiPoly>,
}

impl ExpSum {
    fn zero(dims: usize) -> Self {
        Self {
            dims,
            terms: BTreeMap::new(),
        }
    }

    fn poly(p: &MultiPoly) -> Self {
        Self::atom(p.clone(), 0)
    }

    fn atom(p: MultiPoly, k: i32) -> Self {
        let mut s = Self::zero(p.dims());
        s.terms.insert(k, p);
        s
    }

    fn add(&self, o: &Self) -> Self {
        let mut out = self.clone();
        for (k, p) in &o.terms {
            let e = out
                .terms
                .entry(*k)
                .or_insert_with(|| MultiPoly::zero(self.dims));
            *e = &*e + p;
        }
        out
    }

    fn scale(&self, c: f64) -> Self {
        Self {
            dims: self.dims,
            terms: self.terms.iter().map(|(k, p)| (*k, p.scale(c))).collect(),
        }
    }

    fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(-1.0))
    }

    fn mul(&self, o: &Self) -> Self {
        let mut out = Self::zero(self.dims);
        for (k1, p1) in &self.terms {
            for (k2, p2) in &o.terms {
                out = out.add(&Self::atom(p1 * p2, k1 + k2));
            }
        }
        out
    }

    fn diff(&self, axis: usize, ell: &MultiPoly) -> Self {
        let dl = ell.differentiate(axis).unwrap();
        let mut out = Self::zero(self.dims);
        for (k, p) in &self.terms {
            let d = &p.differentiate(axis).unwrap() + &(p * &dl).scale(*k as f64);
            out = out.add(&Self::atom(d, *k));
        }
        out
    }

    fn eval(&self, pt: &[f64], ell_val: f64) -> f64 {
        self.terms
            .iter()
            .map(|(k, p)| p.evaluate(pt).unwrap() * (*k as f64 * ell_val).exp())
            .sum()
    }
}

#[derive(Clone)]
struct CSum {
    re: ExpSum,
    im: ExpSum,
}

impl CSum {
    fn real(re: ExpSum) -> Self {
        let im = ExpSum::zero(re.dims);
        Self { re, im }
    }
    fn add(&self, o: &Self) -> Self {
        Self {
            re: self.re.add(&o.re),
            im: self.im.add(&o.im),
        }
    }
    fn sub(&self, o: &Self) -> Self {
        Self {
            re: self.re.sub(&o.re),
            im: self.im.sub(&o.im),
        }
    }
    fn mul(&self, o: &Self) -> Self {
        Self {
            re: self.re.mul(&o.re).sub(&self.im.mul(&o.im)),
            im: self.re.mul(&o.im).add(&self.im.mul(&o.re)),
        }
    }
    fn rmul(&self, r: &ExpSum) -> Self {
        Self {
            re: self.re.mul(r),
            im: self.im.mul(r),
        }
    }
    fn conj(&self) -> Self {
        Self {
            re: self.re.clone(),
            im: self.im.scale(-1.0),
        }
    }
    fn times_i(&self) -> Self {
        Self {
            re: self.im.scale(-1.0),
            im: self.re.clone(),
        }
    }
    fn diff(&self, axis: usize, ell: &MultiPoly) -> Self {
        Self {
            re: self.re.diff(axis, ell),
            im: self.im.diff(axis, ell),
        }
    }
}

struct Sides {
    lhs: CSum,
    rhs: CSum,
}

/// Both sides of the deterministic identity as finite exponential sums.
#[allow(clippy::too_many_arguments)]
fn expand_det(
    z: &ComplexPoly,
    ell: &MultiPoly,
    alpha: &MultiPoly,
    beta: &MultiPoly,
    b: &[Vec<MultiPoly>],
    a: f64,
    bp: f64,
    lam: f64,
) -> Sides {
    let m = b.len();
    let dims = m + 1;
    let d = |p: &MultiPoly, ax: usize| p.differentiate(ax).unwrap();
    let pz = |p: &MultiPoly| ExpSum::poly(p);
    let lt = d(ell, 0);
    let lx: Vec<MultiPoly> = (0..m).map(|j| d(ell, j + 1)).collect();
    let lxx = |j: usize, k: usize| d(&lx[j], k + 1);

    let mut a_coef = MultiPoly::constant(dims, -bp * lam);
    for j in 0..m {
        for k in 0..m {
            a_coef = &a_coef + &(&b[j][k] * &(&lx[j] * &lx[k]));
            a_coef = &a_coef - &(&b[j][k] * &lxx(j, k)).scale(1.0 + a);
        }
    }
    let mut b_coef = d(
        &(&(&(&(alpha * alpha) + &(beta * beta)) * &lt) - &(alpha * &a_coef)),
        0,
    );
    for j in 0..m {
        for k in 0..m {
            let t1 = d(&(&(&b[j][k] * &lx[j]) * &a_coef), k + 1);
            let t2 = d(&(&(&(alpha * &b[j][k]) * &lx[j]) * &lt), k + 1);
            let t3 = (&(&(&a_coef - &(alpha * &lt)) * &b[j][k]) * &lxx(j, k)).scale(a);
            b_coef = &b_coef + &(&(&t1 - &t2) + &t3).scale(2.0);
        }
    }

    let zc = CSum {
        re: pz(&z.re),
        im: pz(&z.im),
    };
    let v = CSum {
        re: ExpSum::atom(z.re.clone(), 1),
        im: ExpSum::atom(z.im.clone(), 1),
    };
    let vb = v.conj();
    let v_t = v.diff(0, ell);
    let vb_t = v_t.conj();
    let vx: Vec<CSum> = (0..m).map(|j| v.diff(j + 1, ell)).collect();
    let vbx: Vec<CSum> = vx.iter().map(CSum::conj).collect();
    let div_b_grad = |w: &CSum| {
        let mut acc = CSum::real(ExpSum::zero(dims));
        for j in 0..m {
            for k in 0..m {
                acc = acc.add(&w.diff(j + 1, ell).rmul(&pz(&b[j][k])).diff(k + 1, ell));
            }
        }
        acc
    };

    let i1 = v_t
        .rmul(&pz(beta))
        .times_i()
        .sub(&v.rmul(&pz(&(alpha * &lt))))
        .add(&div_b_grad(&v))
        .add(&v.rmul(&pz(&a_coef)));
    let i1b = i1.conj();
    let z_t = zc.diff(0, ell);
    let p_z = z_t
        .rmul(&pz(alpha))
        .add(&z_t.rmul(&pz(beta)).times_i())
        .add(&div_b_grad(&zc));
    let theta = ExpSum::atom(MultiPoly::constant(dims, 1.0), 1);
    let vv = v.mul(&vb);

    let ab2 = &(alpha * alpha) + &(beta * beta);
    let mut mm = vv.rmul(&pz(&(&(&ab2 * &lt) - &(alpha * &a_coef))));
    for j in 0..m {
        for k in 0..m {
            mm = mm.add(&vx[j].mul(&vbx[k]).rmul(&pz(&(alpha * &b[j][k]))));
            let cross = vbx[k].mul(&v).sub(&vx[k].mul(&vb));
            mm = mm.add(&cross.rmul(&pz(&(&(beta * &b[j][k]) * &lx[j]))).times_i());
        }
    }

    let mut lhs = p_z
        .mul(&i1b)
        .add(&p_z.conj().mul(&i1))
        .rmul(&theta)
        .add(&mm.diff(0, ell));
    for k in 0..m {
        let mut vk = CSum::real(ExpSum::zero(dims));
        for j in 0..m {
            let bjk = &b[j][k];
            let s1 = v.mul(&vb_t).sub(&vb.mul(&v_t)).rmul(&pz(&(bjk * &lx[j])));
            let s2 = vx[j].mul(&vb).sub(&vbx[j].mul(&v)).rmul(&pz(&(bjk * &lt)));
            vk = vk.sub(&s1.add(&s2).rmul(&pz(beta)).times_i());
            vk = vk.sub(
                &vx[j]
                    .mul(&vb_t)
                    .add(&vbx[j].mul(&v_t))
                    .rmul(&pz(&(alpha * bjk))),
            );
            for jp in 0..m {
                for kp in 0..m {
                    let c = &(&b[j][kp] * &b[jp][k]).scale(2.0) - &(bjk * &b[jp][kp]);
                    let q = vx[jp].mul(&vbx[kp]).add(&vbx[jp].mul(&vx[kp]));
                    vk = vk.add(&q.rmul(&pz(&(&c * &lx[j]))));
                    let c2 = (&(&b[jp][kp] * &lxx(jp, kp)) * bjk).scale(-a);
                    vk = vk.add(&vx[j].mul(&vb).add(&vbx[j].mul(&v)).rmul(&pz(&c2)));
                }
            }
            let w = &(&(bjk * &a_coef) * &lx[j]) - &(&(&(alpha * bjk) * &lx[j]) * &lt);
            vk = vk.add(&vv.rmul(&pz(&w.scale(2.0))));
        }
        lhs = lhs.add(&vk.diff(k + 1, ell));
    }

    let mut rhs = i1.mul(&i1b).rmul(&pz(&MultiPoly::constant(dims, 2.0)));
    for j in 0..m {
        for k in 0..m {
            let mut c = d(&(alpha * &b[j][k]), 0).scale(0.5);
            for jp in 0..m {
                for kp in 0..m {
                    c = &c + &(&d(&(&b[jp][k] * &lx[jp]), kp + 1) * &b[j][kp]).scale(2.0);
                    c = &c - &d(&(&(&b[j][k] * &b[jp][kp]) * &lx[jp]), kp + 1);
                    c = &c - &(&(&b[j][k] * &b[jp][kp]) * &lxx(jp, kp)).scale(a);
                }
            }
            rhs = rhs.add(&vx[k].mul(&vbx[j]).add(&vbx[k].mul(&vx[j])).rmul(&pz(&c)));
        }
    }
    let mut c1 = MultiPoly::constant(dims, bp * lam);
    for j in 0..m {
        for k in 0..m {
            c1 = &c1 - &(&d(&b[j][k], k + 1) * &lx[j]);
        }
    }
    rhs = rhs.add(&i1.mul(&vb).add(&i1b.mul(&v)).rmul(&pz(&c1)));
    let blt = beta * &lt;
    for j in 0..m {
        for k in 0..m {
            let bbl = &(beta * &b[j][k]) * &lx[j];
            let ca = &d(&bbl, 0) + &(&b[j][k] * &d(&blt, j + 1));
            let cb = &d(&bbl, k + 1) + &(&(beta * &b[j][k]) * &lxx(j, k)).scale(a);
            let qa = vbx[k].mul(&v).sub(&vx[k].mul(&vb));
            let qb = vb.mul(&v_t).sub(&v.mul(&vb_t));
            rhs = rhs.add(&qa.rmul(&pz(&ca)).add(&qb.rmul(&pz(&cb))).times_i());
            let cc = &b[j][k] * &d(alpha, k + 1);
            rhs = rhs.sub(&vx[j].mul(&vb_t).add(&vbx[j].mul(&v_t)).rmul(&pz(&cc)));
            for jp in 0..m {
                for kp in 0..m {
                    let inner = d(&(&b[jp][kp] * &lxx(jp, kp)), k + 1);
                    let c = (&b[j][k] * &inner).scale(-a);
                    rhs = rhs.add(&vbx[j].mul(&v).add(&vx[j].mul(&vb)).rmul(&pz(&c)));
                }
            }
        }
    }
    rhs = rhs.add(&vv.rmul(&pz(&b_coef)));
    Sides { lhs, rhs }
}

fn poly(dims: usize, s: &str) -> MultiPoly {
    MultiPoly::from_text(dims, s).unwrap()
}

fn check_instance(inst: &DetIdentityInstance, points: usize, seed: u64) -> f64 {
    let sides = expand_det(
        &inst.z,
        &inst.ell,
        &inst.alpha,
        &inst.beta,
        inst.b(),
        inst.a_param,
        inst.b_param,
        inst.lambda,
    );
    let dims = inst.m() + 1;
    let mut rng = seeded_rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let pt: Vec<f64> = (0..dims).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let lv = inst.ell.evaluate(&pt).unwrap();
        let ol = sides.lhs.re.eval(&pt, lv);
        let or = sides.rhs.re.eval(&pt, lv);
        let e = eval_det_identity(inst, &pt).unwrap();
        let scale = e.intermediates.scale.max(1.0);
        // the oracle's own sides agree, and both match the evaluator side by side
        assert!(
            (ol - or).abs() <= 1e-9 * scale,
            "oracle sides disagree: {ol} vs {or}"
        );
        assert!(sides.lhs.im.eval(&pt, lv).abs() <= 1e-9 * scale);
        let rel = ((e.lhs - ol).abs().max((e.rhs - or).abs())) / ol.abs().max(or.abs()).max(1.0);
        worst = worst.max(rel);
    }
    worst
}

#[test]
fn deterministic_identity_matches_symbolic_expansion() {
    let dims = 3;
    let mut rng = seeded_rng(2024);
    let z = ComplexPoly::new(
        random_poly_with(&mut rng, dims, 3, (-1.0, 1.0)).unwrap(),
        random_poly_with(&mut rng, dims, 3, (-1.0, 1.0)).unwrap(),
    )
    .unwrap();
    let ell = random_poly_with(&mut rng, dims, 2, (-0.5, 0.5)).unwrap();
    let b01 = poly(dims, "0 1 1 : 0.5");
    let b = vec![
        vec![poly(dims, "0 0 0 : 1\n0 0 2 : 1"), b01.clone()],
        vec![b01, MultiPoly::constant(dims, 2.0)],
    ];
    let inst = DetIdentityInstance::new(
        z,
        ell,
        MultiPoly::constant(dims, 1.0),
        poly(dims, "1 0 0 : 1\n0 1 0 : 1"),
        b,
        0.7,
        -0.3,
        1.2,
    )
    .unwrap();
    let worst = check_instance(&inst, 200, 5);
    assert!(worst <= 1e-9, "max relative deviation {worst:e}");
}

#[test]
fn deterministic_identity_matches_oracle_in_one_dimension() {
    for seed in 0..3u64 {
        let inst = pdectl::identities::random_det_instance(seed, 1).unwrap();
        let worst = check_instance(&inst, 50, seed + 100);
        assert!(worst <= 1e-9, "seed {seed}: {worst:e}");
    }
}

#[test]
fn multiplier_identity_matches_symbolic_expansion() {
    let dims = 3;
    let m = 2;
    let mut rng = seeded_rng(77);
    let z = random_poly_with(&mut rng, dims, 3, (-1.0, 1.0)).unwrap();
    let h: Vec<MultiPoly> = (0..m)
        .map(|_| random_poly_with(&mut rng, dims, 2, (-1.0, 1.0)).unwrap())
        .collect();
    let d = |p: &MultiPoly, ax: usize| p.differentiate(ax).unwrap();
    let zt = d(&z, 0);
    let zx: Vec<MultiPoly> = (0..m).map(|i| d(&z, i + 1)).collect();
    let mut hg = MultiPoly::zero(dims);
    let mut g2 = MultiPoly::zero(dims);
    for i in 0..m {
        hg = &hg + &(&h[i] * &zx[i]);
        g2 = &g2 + &(&zx[i] * &zx[i]);
    }
    let en = &(&zt * &zt) - &g2;
    let mut lhs = MultiPoly::zero(dims);
    for i in 0..m {
        lhs = &lhs + &d(&(&(&hg * &zx[i]).scale(2.0) + &(&h[i] * &en)), i + 1);
    }
    let mut lap = MultiPoly::zero(dims);
    let mut divh = MultiPoly::zero(dims);
    let mut htg = MultiPoly::zero(dims);
    let mut cross = MultiPoly::zero(dims);
    for i in 0..m {
        lap = &lap + &d(&zx[i], i + 1);
        divh = &divh + &d(&h[i], i + 1);
        htg = &htg + &(&d(&h[i], 0) * &zx[i]);
        for j in 0..m {
            cross = &cross + &(&(&d(&h[j], i + 1) * &zx[i]) * &zx[j]);
        }
    }
    let rhs = &(&(&(&(&d(&zt, 0) - &lap) * &hg).scale(-2.0) + &d(&(&zt * &hg).scale(2.0), 0))
        - &(&zt * &htg).scale(2.0))
        + &(&(&divh * &en) + &cross.scale(2.0));
    for _ in 0..200 {
        let pt: Vec<f64> = (0..dims).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let (l, r) = eval_multiplier_identity(&h, &z, &pt).unwrap();
        let ol = lhs.evaluate(&pt).unwrap();
        let or = rhs.evaluate(&pt).unwrap();
        let s = ol.abs().max(or.abs()).max(1.0);
        assert!((ol - or).abs() <= 1e-11 * s);
        assert!((l - ol).abs() <= 1e-11 * s && (r - or).abs() <= 1e-11 * s);
    }
}

#[test]
fn ode_identity_matches_symbolic_expansion() {
    let lambda = 2.5;
    let x: Vec<MultiPoly> = (0..2)
        .map(|i| random_poly(1, 3, 500 + i, (-1.0, 1.0)).unwrap())
        .collect();
    let mut n2 = MultiPoly::zero(1);
    for p in &x {
        n2 = &n2 + &(p * p);
    }
    let dn2 = n2.differentiate(0).unwrap();
    let mut rng = seeded_rng(8);
    for _ in 0..100 {
        let t: f64 = rng.random_range(0.0..=1.0);
        let (l, r) = eval_ode_identity(lambda, &x, t).unwrap();
        // both sides equal e^{-λt} d|x|²/dt
        let oracle = (-lambda * t).exp() * dn2.evaluate(&[t]).unwrap();
        let s = oracle.abs().max(1.0);
        assert!((l - oracle).abs() <= 1e-12 * s, "{l} vs {oracle}");
        assert!((r - oracle).abs() <= 1e-12 * s, "{r} vs {oracle}");
    }
}
