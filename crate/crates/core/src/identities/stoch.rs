//! Weighted identities for stochastic parabolic and hyperbolic operators.
//!
//! The test process is `u(t,x) = u_d(t,x) + σ(x)·B(t)` for the parabolic
//! identity and `u_t(t,x) = ∂_t u_d(t,x) + σ(x)·B(t)` (so that
//! `u = u_d + σ·∫₀ᵗB`) for the hyperbolic one, with `B` a one-dimensional
//! Brownian path sampled on a uniform grid.
//!
//! Every integrand term is built from jets of the inputs; the quantities that
//! enter the discrete identity are values of linear or quadratic functionals
//! of `u` at a time node. Because the stochastic part of `u` is spanned by at
//! most two fixed jets (`σ` and `σ·(t - t_k)`), each node is reduced once to a
//! small table of coefficients and every path is then summed in scalar
//! arithmetic.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{arg, Result};
use crate::polyjet::{seeded_rng, Jet, JetSpace, MultiPoly};

const ORDER: usize = 4;

/// Which of the two stochastic identities an instance is evaluated against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StochKind {
    Parabolic,
    Hyperbolic,
}

/// One instantiation of a stochastic weighted identity with a stored Brownian path.
#[derive(Clone, Debug)]
pub struct StochIdentityInstance {
    m: usize,
    pub drift: MultiPoly,
    /// σ(x); must not depend on `t`.
    pub noise_shape: MultiPoly,
    pub ell: MultiPoly,
    pub psi: MultiPoly,
    b: Vec<Vec<MultiPoly>>,
    horizon: f64,
    increments: Vec<f64>,
}

impl StochIdentityInstance {
    /// Builds an instance whose path has `steps` increments drawn from `N(0, T/steps)`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        drift: MultiPoly,
        noise_shape: MultiPoly,
        ell: MultiPoly,
        psi: MultiPoly,
        b: Vec<Vec<MultiPoly>>,
        horizon: f64,
        steps: usize,
        seed: u64,
    ) -> Result<Self> {
        let increments = brownian_increments(seed, horizon, steps)?;
        Self::with_increments(drift, noise_shape, ell, psi, b, horizon, increments)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_increments(
        drift: MultiPoly,
        noise_shape: MultiPoly,
        ell: MultiPoly,
        psi: MultiPoly,
        b: Vec<Vec<MultiPoly>>,
        horizon: f64,
        increments: Vec<f64>,
    ) -> Result<Self> {
        let m = b.len();
        if m == 0 || b.iter().any(|r| r.len() != m) {
            return arg("coefficient matrix must be square and non-empty");
        }
        let dims = m + 1;
        for p in [&drift, &noise_shape, &ell, &psi]
            .into_iter()
            .chain(b.iter().flatten())
        {
            if p.dims() != dims {
                return arg(format!(
                    "polynomial with {} variables, expected {dims}",
                    p.dims()
                ));
            }
        }
        for j in 0..m {
            for k in 0..m {
                if b[j][k] != b[k][j] {
                    return arg("coefficient matrix is not symmetric");
                }
            }
        }
        if noise_shape.degree_in(0).unwrap_or(0) > 0 {
            return arg("noise shape must not depend on t");
        }
        if !(horizon > 0.0) || increments.is_empty() {
            return arg("need a positive horizon and at least one time step");
        }
        Ok(Self {
            m,
            drift,
            noise_shape,
            ell,
            psi,
            b,
            horizon,
            increments,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn steps(&self) -> usize {
        self.increments.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps() as f64
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Path values `B(t_k)`, `k = 0..=steps`, with `B(0) = 0`.
    pub fn path(&self) -> Vec<f64> {
        path_from_increments(&self.increments)
    }

    /// The same instance with a different stored path.
    pub fn with_path(&self, increments: Vec<f64>) -> Result<Self> {
        let mut out = self.clone();
        if increments.is_empty() {
            return arg("path must have at least one increment");
        }
        out.increments = increments;
        Ok(out)
    }

    pub fn is_drift_only(&self) -> bool {
        self.noise_shape.is_zero()
    }
}

/// `steps` independent `N(0, T/steps)` increments from the seeded stream.
pub fn brownian_increments(seed: u64, horizon: f64, steps: usize) -> Result<Vec<f64>> {
    if steps == 0 || !(horizon > 0.0) {
        return arg("need a positive horizon and at least one step");
    }
    let sd = (horizon / steps as f64).sqrt();
    let mut rng = seeded_rng(seed);
    Ok((0..steps)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect())
}

/// Sums consecutive pairs of increments: the same path on a grid twice as coarse.
pub fn coarsen_increments(fine: &[f64]) -> Vec<f64> {
    fine.chunks(2).map(|c| c.iter().sum()).collect()
}

fn path_from_increments(inc: &[f64]) -> Vec<f64> {
    let mut b = Vec::with_capacity(inc.len() + 1);
    let mut acc = 0.0;
    b.push(0.0);
    for d in inc {
        acc += d;
        b.push(acc);
    }
    b
}

/// Jets of the deterministic coefficients at one point.
struct Coeffs {
    m: usize,
    theta: Jet,
    l_t: Jet,
    l_tt: Jet,
    lx: Vec<Jet>,
    lxx: Vec<Vec<Jet>>,
    psi: Jet,
    b: Vec<Vec<Jet>>,
}

impl Coeffs {
    fn new(inst: &StochIdentityInstance, sp: &Arc<JetSpace>, pt: &[f64]) -> Result<Self> {
        let m = inst.m;
        let ell = inst.ell.taylor(sp, pt)?;
        let lx: Vec<Jet> = (0..m).map(|i| ell.diff(i + 1)).collect();
        let lxx = lx
            .iter()
            .map(|li| (0..m).map(|j| li.diff(j + 1)).collect())
            .collect();
        let l_t = ell.diff(0);
        Ok(Self {
            m,
            theta: ell.exp(),
            l_tt: l_t.diff(0),
            l_t,
            lx,
            lxx,
            psi: inst.psi.taylor(sp, pt)?,
            b: inst
                .b
                .iter()
                .map(|r| {
                    r.iter()
                        .map(|p| p.taylor(sp, pt))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?,
        })
    }

    fn zero(&self) -> Jet {
        self.theta.scale(0.0)
    }

    /// `Σ_{ij} (b^{ij} w_{x_i})_{x_j}`
    fn div_b_grad(&self, w: &Jet) -> Jet {
        let mut acc = self.zero();
        for i in 0..self.m {
            let wi = w.diff(i + 1);
            for j in 0..self.m {
                acc = &acc + &(&self.b[i][j] * &wi).diff(j + 1);
            }
        }
        acc
    }

    /// `Σ_{ij} (b^{ij} ℓ_i ℓ_j - b^{ij}_{x_j} ℓ_i - b^{ij} ℓ_{ij})`
    fn b_ell_form(&self) -> Jet {
        let mut acc = self.zero();
        for i in 0..self.m {
            for j in 0..self.m {
                let bij = &self.b[i][j];
                acc = &acc + &(bij * &(&self.lx[i] * &self.lx[j]));
                acc = &acc - &(&bij.diff(j + 1) * &self.lx[i]);
                acc = &acc - &(bij * &self.lxx[i][j]);
            }
        }
        acc
    }

    /// `Σ_{ij} Σ_{i'j'} [2 b^{ij'} (b^{i'j} ℓ_{i'})_{j'} - (b^{ij} b^{i'j'} ℓ_{i'})_{j'}]` for fixed `(i, j)`.
    fn grad_form_coeff(&self, i: usize, j: usize) -> Jet {
        let mut acc = self.zero();
        for ip in 0..self.m {
            for jp in 0..self.m {
                let t1 = &self.b[i][jp] * &(&self.b[ip][j] * &self.lx[ip]).diff(jp + 1);
                let t2 = (&(&self.b[i][j] * &self.b[ip][jp]) * &self.lx[ip]).diff(jp + 1);
                acc = &acc + &(&t1.scale(2.0) - &t2);
            }
        }
        acc
    }

    /// `Σ_{i'j'} (2 b^{ij} b^{i'j'} ℓ_{i'} v_i v_{j'} - b^{ij} b^{i'j'} ℓ_i v_{i'} v_{j'})` for fixed `(i, j)`.
    fn flux_quadratic(&self, i: usize, j: usize, vx: &[Jet]) -> Jet {
        let mut acc = self.zero();
        for ip in 0..self.m {
            for jp in 0..self.m {
                let bb = &self.b[i][j] * &self.b[ip][jp];
                let t1 = &(&bb * &self.lx[ip]) * &(&vx[i] * &vx[jp]);
                let t2 = &(&bb * &self.lx[i]) * &(&vx[ip] * &vx[jp]);
                acc = &acc + &(&t1.scale(2.0) - &t2);
            }
        }
        acc
    }
}

/// Parabolic coefficients `A` and `B`.
fn parabolic_ab(c: &Coeffs) -> (Jet, Jet) {
    let a = &(-&c.b_ell_form()) - &c.psi;
    let mut div_ab = c.zero();
    let mut div_bpsi = c.zero();
    for i in 0..c.m {
        for j in 0..c.m {
            div_ab = &div_ab + &(&(&a * &c.b[i][j]) * &c.lx[i]).diff(j + 1);
            div_bpsi = &div_bpsi + &(&c.b[i][j] * &c.psi.diff(j + 1)).diff(i + 1);
        }
    }
    let b = &(&(&(&a * &c.psi) - &div_ab).scale(2.0) - &a.diff(0)) - &div_bpsi;
    (a, b)
}

/// Hyperbolic coefficients `A` and `B`.
fn hyperbolic_ab(c: &Coeffs) -> (Jet, Jet) {
    let a = &(&(&(&c.l_t * &c.l_t) - &c.l_tt) - &c.b_ell_form()) - &c.psi;
    let mut div_ab = c.zero();
    let mut div_bpsi = c.zero();
    for i in 0..c.m {
        for j in 0..c.m {
            div_ab = &div_ab + &(&(&a * &c.b[i][j]) * &c.lx[i]).diff(j + 1);
            div_bpsi = &div_bpsi + &(&c.b[i][j] * &c.psi.diff(i + 1)).diff(j + 1);
        }
    }
    let b = &(&(&(&a * &c.psi) + &(&a * &c.l_t).diff(0)) - &div_ab)
        + &(&c.psi.diff(0).diff(0) - &div_bpsi).scale(0.5);
    (a, b)
}

/// Parabolic integrand pieces that are functionals of the state `u` at one time.
struct ParabolicTerms {
    /// `-Σ (b^{ij} v_i)_j + A v`
    lv: Jet,
    /// `Σ (b^{ij} u_i)_j`
    du: Jet,
    /// `Σ (b^{ij} v_i)_j`
    dv: Jet,
    v: Jet,
    vx: Vec<Jet>,
    /// `w_j = Σ_i b^{ij} v_i`
    w: Vec<Jet>,
    /// Divergence of the spatial flux (LHS, multiplies `dt`).
    flux_div: Jet,
    /// Right-hand side density (multiplies `dt`).
    rhs: Jet,
    /// `Σ b^{ij} v_i v_j + A v²`
    bracket: Jet,
}

fn parabolic_terms(c: &Coeffs, a: &Jet, bcoef: &Jet, u: &Jet) -> ParabolicTerms {
    let m = c.m;
    let v = &c.theta * u;
    let vx: Vec<Jet> = (0..m).map(|i| v.diff(i + 1)).collect();
    let dv = c.div_b_grad(&v);
    let lv = &(-&dv) + &(a * &v);
    let du = c.div_b_grad(u);
    let vv = &v * &v;
    let w: Vec<Jet> = (0..m)
        .map(|j| {
            let mut acc = c.zero();
            for i in 0..m {
                acc = &acc + &(&c.b[i][j] * &vx[i]);
            }
            acc
        })
        .collect();

    let mut flux_div = c.zero();
    for j in 0..m {
        let mut fj = c.zero();
        for i in 0..m {
            fj = &fj + &c.flux_quadratic(i, j, &vx);
            fj = &fj + &(&(&c.psi * &c.b[i][j]) * &(&vx[i] * &v));
            let w_i = &(a * &c.lx[i]) + &c.psi.diff(i + 1).scale(0.5);
            fj = &fj - &(&(&c.b[i][j] * &w_i) * &vv);
        }
        flux_div = &flux_div + &fj.diff(j + 1).scale(2.0);
    }

    let mut rhs = c.zero();
    let mut bracket = a * &vv;
    for i in 0..m {
        for j in 0..m {
            let coef = &(&c.grad_form_coeff(i, j) - &c.b[i][j].diff(0).scale(0.5))
                + &(&c.psi * &c.b[i][j]);
            let vivj = &vx[i] * &vx[j];
            rhs = &rhs + &(&coef * &vivj).scale(2.0);
            bracket = &bracket + &(&c.b[i][j] * &vivj);
        }
    }
    rhs = &rhs + &(bcoef * &vv);
    let second = &(-&dv) + &(&(a - &c.l_t) * &v);
    rhs = &rhs + &(&lv * &second).scale(2.0);

    ParabolicTerms {
        lv,
        du,
        dv,
        v,
        vx,
        w,
        flux_div,
        rhs,
        bracket,
    }
}

/// Hyperbolic integrand pieces at one time.
struct HyperbolicTerms {
    /// `-2ℓ_t v_t + 2 Σ b^{ij} ℓ_i v_j + Ψ v`
    z: Jet,
    du: Jet,
    flux_div: Jet,
    rhs: Jet,
    /// The bracket under `d[...]` on the left-hand side.
    bracket: Jet,
}

fn hyperbolic_terms(c: &Coeffs, a: &Jet, bcoef: &Jet, u: &Jet) -> HyperbolicTerms {
    let m = c.m;
    let v = &c.theta * u;
    let v_t = v.diff(0);
    let vx: Vec<Jet> = (0..m).map(|i| v.diff(i + 1)).collect();
    let vv = &v * &v;
    let vtvt = &v_t * &v_t;

    let mut z = &(&c.l_t * &v_t).scale(-2.0) + &(&c.psi * &v);
    for i in 0..m {
        for j in 0..m {
            z = &z + &(&(&c.b[i][j] * &c.lx[i]) * &vx[j]).scale(2.0);
        }
    }
    let du = c.div_b_grad(u);

    let mut flux_div = c.zero();
    for j in 0..m {
        let mut fj = c.zero();
        for i in 0..m {
            let bij = &c.b[i][j];
            fj = &fj + &c.flux_quadratic(i, j, &vx);
            fj = &fj - &(&(bij * &c.l_t) * &(&vx[i] * &v_t)).scale(2.0);
            fj = &fj + &(&(bij * &c.lx[i]) * &vtvt);
            fj = &fj + &(&(&c.psi * bij) * &(&vx[i] * &v));
            let w_i = &(a * &c.lx[i]) + &c.psi.diff(i + 1).scale(0.5);
            fj = &fj - &(&(&w_i * bij) * &vv);
        }
        flux_div = &flux_div + &fj.diff(j + 1);
    }

    let mut bracket = &(&(&c.l_t * &vtvt) - &(&(&c.psi * &v_t) * &v))
        + &(&(&(a * &c.l_t) + &c.psi.diff(0).scale(0.5)) * &vv);
    let mut div_bl = c.zero();
    for i in 0..m {
        for j in 0..m {
            let bij = &c.b[i][j];
            bracket = &bracket + &(&(bij * &c.l_t) * &(&vx[i] * &vx[j]));
            bracket = &bracket - &(&(bij * &c.lx[i]) * &(&vx[j] * &v_t)).scale(2.0);
            div_bl = &div_bl + &(bij * &c.lx[i]).diff(j + 1);
        }
    }

    let mut rhs = &(&(&(&c.l_tt + &div_bl) - &c.psi) * &vtvt) + &(bcoef * &vv);
    for i in 0..m {
        for j in 0..m {
            let bij = &c.b[i][j];
            let cross = &(&c.b[i][j] * &c.lx[j]).diff(0) + &(bij * &c.lx[j].diff(0));
            rhs = &rhs - &(&cross * &(&vx[i] * &v_t)).scale(2.0);
            let coef = &(&(bij * &c.l_t).diff(0) + &c.grad_form_coeff(i, j)) + &(&c.psi * bij);
            rhs = &rhs + &(&coef * &(&vx[i] * &vx[j]));
        }
    }
    rhs = &rhs + &(&z * &z);

    HyperbolicTerms {
        z,
        du,
        flux_div,
        rhs,
        bracket,
    }
}

/// Both sides of the drift-only (deterministic) pointwise form of the identity at `(t, x)`:
/// the stochastic differentials become `du = u_t dt` and the quadratic variations vanish.
pub fn eval_stoch_pointwise(
    inst: &StochIdentityInstance,
    kind: StochKind,
    pt: &[f64],
) -> Result<(f64, f64)> {
    if pt.len() != inst.m + 1 {
        return arg("sample point has the wrong dimension");
    }
    let sp = JetSpace::new(inst.m + 1, ORDER);
    let c = Coeffs::new(inst, &sp, pt)?;
    let u = inst.drift.taylor(&sp, pt)?;
    match kind {
        StochKind::Parabolic => {
            let (a, b) = parabolic_ab(&c);
            let t = parabolic_terms(&c, &a, &b, &u);
            let v_t = t.v.diff(0);
            let mut lhs = &(&(&c.theta * &t.lv) * &(&u.diff(0) - &t.du)).scale(2.0) + &t.flux_div;
            for (j, wj) in t.w.iter().enumerate() {
                lhs = &lhs + &(wj * &v_t).diff(j + 1).scale(2.0);
            }
            let rhs = &t.rhs + &t.bracket.diff(0);
            Ok((lhs.value(), rhs.value()))
        }
        StochKind::Hyperbolic => {
            let (a, b) = hyperbolic_ab(&c);
            let t = hyperbolic_terms(&c, &a, &b, &u);
            let u_tt = u.diff(0).diff(0);
            let lhs =
                &(&(&(&c.theta * &t.z) * &(&u_tt - &t.du)) + &t.flux_div) + &t.bracket.diff(0);
            Ok((lhs.value(), t.rhs.value()))
        }
    }
}

/// Coefficients of a functional `F(u_0 + Σ_r s_r u_r)` in the stochastic coordinates `s`.
#[derive(Clone, Debug)]
struct Poly2 {
    /// Row-major `(p+1)×(p+1)` symmetric matrix over `(1, s_1, .., s_p)`.
    q: Vec<f64>,
    p: usize,
}

impl Poly2 {
    fn eval(&self, s: &[f64]) -> f64 {
        let n = self.p + 1;
        let coord = |i: usize| if i == 0 { 1.0 } else { s[i - 1] };
        let mut acc = 0.0;
        for i in 0..n {
            let ci = coord(i);
            for j in 0..n {
                acc += self.q[i * n + j] * ci * coord(j);
            }
        }
        acc
    }

    /// Recovers a quadratic (or linear) functional from evaluations on sums of the basis jets.
    fn from_fn(basis: &[Jet], f: impl Fn(&Jet) -> f64) -> Self {
        let n = basis.len();
        let mut q = vec![0.0; n * n];
        let diag: Vec<f64> = basis.iter().map(&f).collect();
        for i in 0..n {
            q[i * n + i] = diag[i];
            for j in (i + 1)..n {
                let plus = f(&(&basis[i] + &basis[j]));
                let minus = f(&(&basis[i] - &basis[j]));
                let bij = (plus - minus) / 4.0;
                q[i * n + j] = bij;
                q[j * n + i] = bij;
            }
        }
        // Terms that are linear in u carry no constant part: F(u0 + s u1) with u0 the
        // drift already includes them in the polarization above, so only the diagonal
        // of the constant coordinate needs care: F(0) = 0 for every functional here.
        Self { q, p: n - 1 }
    }
}

/// Linear functional over `(1, s_1, .., s_p)`.
#[derive(Clone, Debug)]
struct Lin {
    c: Vec<f64>,
}

impl Lin {
    fn from_fn(basis: &[Jet], f: impl Fn(&Jet) -> f64) -> Self {
        Self {
            c: basis.iter().map(f).collect(),
        }
    }

    fn eval(&self, s: &[f64]) -> f64 {
        self.c[0] + self.c[1..].iter().zip(s).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Per-node reduction of the parabolic identity.
#[derive(Clone, Debug)]
struct ParabolicNode {
    theta: f64,
    a: f64,
    lx: Vec<f64>,
    b: Vec<f64>,
    u: Lin,
    ux: Vec<Lin>,
    lv: Lin,
    du: Lin,
    dv: Lin,
    v: Lin,
    vx: Vec<Lin>,
    w: Vec<Lin>,
    flux_div: Poly2,
    rhs: Poly2,
    bracket: Poly2,
}

/// Per-node reduction of the hyperbolic identity.
#[derive(Clone, Debug)]
struct HyperbolicNode {
    theta: f64,
    l_t: f64,
    u_t: Lin,
    z: Lin,
    du: Lin,
    flux_div: Poly2,
    rhs: Poly2,
    bracket: Poly2,
}

/// Precomputed reduction of a stochastic identity at a fixed spatial point; evaluates the
/// discrete residual of any Brownian path on the same time grid.
#[derive(Clone, Debug)]
pub struct StochResidualKernel {
    kind: StochKind,
    m: usize,
    dt: f64,
    parabolic: Vec<ParabolicNode>,
    hyperbolic: Vec<HyperbolicNode>,
}

impl StochResidualKernel {
    pub fn new(inst: &StochIdentityInstance, kind: StochKind, x_pt: &[f64]) -> Result<Self> {
        let m = inst.m;
        if x_pt.len() != m {
            return arg(format!(
                "spatial point has {} coordinates, expected {m}",
                x_pt.len()
            ));
        }
        let sp = JetSpace::new(m + 1, ORDER);
        let dt = inst.dt();
        let steps = inst.steps();
        let mut parabolic = Vec::new();
        let mut hyperbolic = Vec::new();
        for k in 0..=steps {
            let tk = if k == steps {
                inst.horizon
            } else {
                k as f64 * dt
            };
            let mut pt = vec![tk];
            pt.extend_from_slice(x_pt);
            let c = Coeffs::new(inst, &sp, &pt)?;
            let ud = inst.drift.taylor(&sp, &pt)?;
            let sigma = inst.noise_shape.taylor(&sp, &pt)?;
            match kind {
                StochKind::Parabolic => {
                    let (a, bc) = parabolic_ab(&c);
                    let basis = [ud, sigma];
                    let terms = |u: &Jet| parabolic_terms(&c, &a, &bc, u);
                    let per: Vec<ParabolicTerms> = basis.iter().map(terms).collect();
                    let lin = |f: &dyn Fn(&ParabolicTerms) -> f64| Lin {
                        c: per.iter().map(f).collect(),
                    };
                    let quad = |f: &dyn Fn(&ParabolicTerms) -> f64| {
                        Poly2::from_fn(&basis, |u| f(&terms(u)))
                    };
                    parabolic.push(ParabolicNode {
                        theta: c.theta.value(),
                        a: a.value(),
                        lx: c.lx.iter().map(Jet::value).collect(),
                        b: c.b.iter().flatten().map(Jet::value).collect(),
                        u: Lin::from_fn(&basis, Jet::value),
                        ux: (0..m)
                            .map(|i| Lin::from_fn(&basis, |u| u.diff(i + 1).value()))
                            .collect(),
                        lv: lin(&|t| t.lv.value()),
                        du: lin(&|t| t.du.value()),
                        dv: lin(&|t| t.dv.value()),
                        v: lin(&|t| t.v.value()),
                        vx: (0..m).map(|i| lin(&|t| t.vx[i].value())).collect(),
                        w: (0..m).map(|j| lin(&|t| t.w[j].value())).collect(),
                        flux_div: quad(&|t| t.flux_div.value()),
                        rhs: quad(&|t| t.rhs.value()),
                        bracket: quad(&|t| t.bracket.value()),
                    });
                }
                StochKind::Hyperbolic => {
                    let (a, bc) = hyperbolic_ab(&c);
                    // u = u_d + σ I_k + σ B_k (t - t_k): value σ I_k, time derivative σ B_k
                    let tshift = Jet::variable(&sp, 0, 0.0);
                    let basis = [ud, sigma.clone(), &sigma * &tshift];
                    let terms = |u: &Jet| hyperbolic_terms(&c, &a, &bc, u);
                    let per: Vec<HyperbolicTerms> = basis.iter().map(terms).collect();
                    let lin = |f: &dyn Fn(&HyperbolicTerms) -> f64| Lin {
                        c: per.iter().map(f).collect(),
                    };
                    let quad = |f: &dyn Fn(&HyperbolicTerms) -> f64| {
                        Poly2::from_fn(&basis, |u| f(&terms(u)))
                    };
                    hyperbolic.push(HyperbolicNode {
                        theta: c.theta.value(),
                        l_t: c.l_t.value(),
                        u_t: Lin::from_fn(&basis, |u| u.diff(0).value()),
                        z: lin(&|t| t.z.value()),
                        du: lin(&|t| t.du.value()),
                        flux_div: quad(&|t| t.flux_div.value()),
                        rhs: quad(&|t| t.rhs.value()),
                        bracket: quad(&|t| t.bracket.value()),
                    });
                }
            }
        }
        Ok(Self {
            kind,
            m,
            dt,
            parabolic,
            hyperbolic,
        })
    }

    pub fn steps(&self) -> usize {
        match self.kind {
            StochKind::Parabolic => self.parabolic.len() - 1,
            StochKind::Hyperbolic => self.hyperbolic.len() - 1,
        }
    }

    /// Absolute residual `|LHS - RHS|` of the discretized identity for the given path increments.
    pub fn residual(&self, increments: &[f64]) -> Result<f64> {
        if increments.len() != self.steps() {
            return arg(format!(
                "path has {} increments, kernel expects {}",
                increments.len(),
                self.steps()
            ));
        }
        let path = path_from_increments(increments);
        Ok(match self.kind {
            StochKind::Parabolic => self.parabolic_residual(&path),
            StochKind::Hyperbolic => self.hyperbolic_residual(&path),
        })
    }

    fn parabolic_residual(&self, path: &[f64]) -> f64 {
        let (m, dt) = (self.m, self.dt);
        let nodes = &self.parabolic;
        let n = nodes.len() - 1;
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for k in 0..n {
            let (cur, next) = (&nodes[k], &nodes[k + 1]);
            let s = [path[k]];
            let s1 = [path[k + 1]];
            let d_u = next.u.eval(&s1) - cur.u.eval(&s);
            let d_v = next.v.eval(&s1) - cur.v.eval(&s);
            lhs += 2.0 * cur.theta * cur.lv.eval(&s) * (d_u - cur.du.eval(&s) * dt);
            let mut t2 = cur.dv.eval(&s) * d_v;
            for j in 0..m {
                t2 += cur.w[j].eval(&s) * (next.vx[j].eval(&s1) - cur.vx[j].eval(&s));
            }
            lhs += 2.0 * t2;
            lhs += cur.flux_div.eval(&s) * dt;
            rhs += cur.rhs.eval(&s) * dt;
            // -θ² [Σ b^{ij}(du_i + ℓ_i du)(du_j + ℓ_j du) + A (du)²]
            let g: Vec<f64> = (0..m)
                .map(|i| next.ux[i].eval(&s1) - cur.ux[i].eval(&s) + cur.lx[i] * d_u)
                .collect();
            let mut qv = cur.a * d_u * d_u;
            for i in 0..m {
                for j in 0..m {
                    qv += cur.b[i * m + j] * g[i] * g[j];
                }
            }
            rhs -= cur.theta * cur.theta * qv;
        }
        rhs += nodes[n].bracket.eval(&[path[n]]) - nodes[0].bracket.eval(&[path[0]]);
        (lhs - rhs).abs()
    }

    fn hyperbolic_residual(&self, path: &[f64]) -> f64 {
        let dt = self.dt;
        let nodes = &self.hyperbolic;
        let n = nodes.len() - 1;
        let mut integral = 0.0;
        let mut s_cur = [0.0, path[0]];
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for k in 0..n {
            let (cur, next) = (&nodes[k], &nodes[k + 1]);
            integral += 0.5 * dt * (path[k] + path[k + 1]);
            let s_next = [integral, path[k + 1]];
            let d_ut = next.u_t.eval(&s_next) - cur.u_t.eval(&s_cur);
            lhs += cur.theta * cur.z.eval(&s_cur) * (d_ut - cur.du.eval(&s_cur) * dt);
            lhs += cur.flux_div.eval(&s_cur) * dt;
            rhs += cur.rhs.eval(&s_cur) * dt;
            rhs += cur.theta * cur.theta * cur.l_t * d_ut * d_ut;
            if k + 1 == n {
                lhs += next.bracket.eval(&s_next) - nodes[0].bracket.eval(&[0.0, path[0]]);
            }
            s_cur = s_next;
        }
        (lhs - rhs).abs()
    }
}

/// Discrete residual of the parabolic identity at `x_pt` for the instance's stored path.
pub fn eval_stoch_parabolic_residual(inst: &StochIdentityInstance, x_pt: &[f64]) -> Result<f64> {
    StochResidualKernel::new(inst, StochKind::Parabolic, x_pt)?.residual(&inst.increments)
}

/// Discrete residual of the hyperbolic identity at `x_pt` for the instance's stored path.
pub fn eval_stoch_hyperbolic_residual(inst: &StochIdentityInstance, x_pt: &[f64]) -> Result<f64> {
    StochResidualKernel::new(inst, StochKind::Hyperbolic, x_pt)?.residual(&inst.increments)
}
