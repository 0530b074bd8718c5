//! Pointwise weighted identity for the complex second-order operator
//! `P z = (α + iβ) z_t + Σ_{j,k} (b^{jk} z_{x_j})_{x_k}`.
//!
//! With `θ = e^ℓ` and `v = θ z`, both sides are assembled from jets of the
//! inputs at the sample point; the outer derivatives `M_t` and `∂_k V^k` are
//! taken on the jets of `M` and `V^k`, never by differencing.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::polyjet::{CJet, ComplexPoly, Jet, JetSpace, MultiPoly};

/// One instantiation of the deterministic weighted identity.
#[derive(Clone, Debug)]
pub struct DetIdentityInstance {
    m: usize,
    pub z: ComplexPoly,
    pub ell: MultiPoly,
    pub alpha: MultiPoly,
    pub beta: MultiPoly,
    b: Vec<Vec<MultiPoly>>,
    pub a_param: f64,
    pub b_param: f64,
    pub lambda: f64,
}

impl DetIdentityInstance {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        z: ComplexPoly,
        ell: MultiPoly,
        alpha: MultiPoly,
        beta: MultiPoly,
        b: Vec<Vec<MultiPoly>>,
        a_param: f64,
        b_param: f64,
        lambda: f64,
    ) -> Result<Self> {
        let m = b.len();
        if m == 0 {
            return arg("coefficient matrix must be at least 1x1");
        }
        let dims = m + 1;
        if b.iter().any(|row| row.len() != m) {
            return arg("coefficient matrix is not square");
        }
        for (name, p) in [
            ("z", &z.re),
            ("z", &z.im),
            ("ell", &ell),
            ("alpha", &alpha),
            ("beta", &beta),
        ] {
            if p.dims() != dims {
                return arg(format!(
                    "{name} has {} variables, expected {dims}",
                    p.dims()
                ));
            }
        }
        for j in 0..m {
            for k in 0..m {
                if b[j][k].dims() != dims {
                    return arg(format!("b[{j}][{k}] has the wrong variable count"));
                }
                if b[j][k] != b[k][j] {
                    return arg(format!("coefficient matrix is not symmetric at ({j},{k})"));
                }
            }
        }
        Ok(Self {
            m,
            z,
            ell,
            alpha,
            beta,
            b,
            a_param,
            b_param,
            lambda,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn b(&self) -> &[Vec<MultiPoly>] {
        &self.b
    }

    /// Returns a copy with `z` multiplied by a real constant.
    pub fn with_scaled_z(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.z = self.z.scale(c);
        out
    }
}

/// Coefficient specializations of the identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetSlice {
    /// `α = 1`, `β = 0`.
    Parabolic,
    /// `α = β = 0` and `b` independent of `t`.
    Hyperbolic,
    /// `z` replaced by its real part.
    RealData,
}

impl DetSlice {
    pub const ALL: [DetSlice; 3] = [Self::Parabolic, Self::Hyperbolic, Self::RealData];

    pub fn name(self) -> &'static str {
        match self {
            Self::Parabolic => "parabolic",
            Self::Hyperbolic => "hyperbolic",
            Self::RealData => "real_data",
        }
    }
}

impl DetIdentityInstance {
    /// The same instance restricted to `slice`.
    pub fn slice(&self, slice: DetSlice) -> Self {
        let d = self.m + 1;
        let mut out = self.clone();
        match slice {
            DetSlice::Parabolic => {
                out.alpha = MultiPoly::constant(d, 1.0);
                out.beta = MultiPoly::zero(d);
            }
            DetSlice::Hyperbolic => {
                out.alpha = MultiPoly::zero(d);
                out.beta = MultiPoly::zero(d);
                for row in &mut out.b {
                    for p in row.iter_mut() {
                        *p = MultiPoly::from_terms(
                            d,
                            p.terms()
                                .filter(|(e, _)| e[0] == 0)
                                .map(|(e, c)| (e.clone(), c)),
                        )
                        .expect("same variable count");
                    }
                }
            }
            DetSlice::RealData => out.z = ComplexPoly::real(self.z.re.clone()),
        }
        out
    }
}

/// Values of the auxiliary quantities at the sample point.
#[derive(Clone, Debug, Serialize)]
pub struct DetIntermediates {
    pub i1: (f64, f64),
    pub a: f64,
    pub b: f64,
    pub m: (f64, f64),
    pub v: Vec<(f64, f64)>,
    /// Imaginary parts of the two sides (zero up to round-off).
    pub lhs_im: f64,
    pub rhs_im: f64,
    /// Largest magnitude of any term carrying the factor `i` (in `M`, `V^k` or the right side).
    pub i_terms: f64,
    /// Largest magnitude among the individual terms summed on either side.
    pub scale: f64,
}

#[derive(Clone, Debug)]
pub struct DetEvaluation {
    pub lhs: f64,
    pub rhs: f64,
    pub intermediates: DetIntermediates,
}

const ORDER: usize = 3;

struct Acc {
    re: f64,
    im: f64,
    scale: f64,
}

impl Acc {
    fn new() -> Self {
        Self {
            re: 0.0,
            im: 0.0,
            scale: 0.0,
        }
    }
    fn push(&mut self, (re, im): (f64, f64)) {
        self.re += re;
        self.im += im;
        self.scale = self.scale.max(re.abs()).max(im.abs());
    }
}

/// Evaluates both sides of the identity at `pt = (t, x_1, .., x_m)`.
pub fn eval_det_identity(inst: &DetIdentityInstance, pt: &[f64]) -> Result<DetEvaluation> {
    let m = inst.m;
    if pt.len() != m + 1 {
        return arg(format!(
            "sample point has {} coordinates, expected {}",
            pt.len(),
            m + 1
        ));
    }
    let sp: Arc<JetSpace> = JetSpace::new(m + 1, ORDER);
    let jet = |p: &MultiPoly| p.taylor(&sp, pt);
    let ell = jet(&inst.ell)?;
    let alpha = jet(&inst.alpha)?;
    let beta = jet(&inst.beta)?;
    let z = CJet::new(jet(&inst.z.re)?, jet(&inst.z.im)?);
    let b: Vec<Vec<Jet>> = inst
        .b
        .iter()
        .map(|row| row.iter().map(jet).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let (a_p, b_p, lam) = (inst.a_param, inst.b_param, inst.lambda);

    let theta = ell.exp();
    let v = z.mul_real(&theta);
    let vb = v.conj();
    let v_t = v.diff(0);
    let vb_t = v_t.conj();
    let vx: Vec<CJet> = (0..m).map(|j| v.diff(j + 1)).collect();
    let vbx: Vec<CJet> = vx.iter().map(CJet::conj).collect();
    let l_t = ell.diff(0);
    let lx: Vec<Jet> = (0..m).map(|j| ell.diff(j + 1)).collect();
    let lxx: Vec<Vec<Jet>> = lx
        .iter()
        .map(|lj| (0..m).map(|k| lj.diff(k + 1)).collect())
        .collect();
    let real = CJet::real;

    // A = Σ b^{jk} ℓ_j ℓ_k - (1+a) Σ b^{jk} ℓ_{jk} - bλ
    let mut a_coef = Jet::constant(&sp, -b_p * lam);
    for j in 0..m {
        for k in 0..m {
            a_coef = &a_coef + &(&b[j][k] * &(&lx[j] * &lx[k]));
            a_coef = &a_coef - &(&b[j][k] * &lxx[j][k]).scale(1.0 + a_p);
        }
    }

    // Σ (b^{jk} w_{x_j})_{x_k} for a complex jet w
    let div_b_grad = |w: &CJet| -> CJet {
        let mut acc: Option<CJet> = None;
        for j in 0..m {
            let wj = w.diff(j + 1);
            for k in 0..m {
                let term = wj.mul_real(&b[j][k]).diff(k + 1);
                acc = Some(match acc {
                    None => term,
                    Some(a) => &a + &term,
                });
            }
        }
        acc.expect("m >= 1")
    };

    // I1 = iβ v_t - α ℓ_t v + Σ (b^{jk} v_j)_k + A v
    let i1 = &(&(&v_t.mul_real(&beta).times_i() - &v.mul_real(&(&alpha * &l_t))) + &div_b_grad(&v))
        + &v.mul_real(&a_coef);
    let i1b = i1.conj();
    // P z = (α + iβ) z_t + Σ (b^{jk} z_j)_k
    let z_t = z.diff(0);
    let pz = &(&z_t.mul_real(&alpha) + &z_t.mul_real(&beta).times_i()) + &div_b_grad(&z);
    let pzb = pz.conj();

    // M
    let vv = v.norm_sqr();
    let ab2 = &(&alpha * &alpha) + &(&beta * &beta);
    let mut i_acc = Acc::new();
    let mut m_q = real(&(&ab2 * &l_t) - &(&alpha * &a_coef)).mul_real(&vv);
    for j in 0..m {
        for k in 0..m {
            m_q = &m_q + &(&vx[j] * &vbx[k]).mul_real(&(&alpha * &b[j][k]));
            let cross = &(&vbx[k] * &v) - &(&vx[k] * &vb);
            let t = cross.mul_real(&(&(&beta * &b[j][k]) * &lx[j])).times_i();
            i_acc.push(t.value());
            m_q = &m_q + &t;
        }
    }

    // Σ_{j',k'} b^{j'k'} ℓ_{j'k'}
    let mut tr_bl = Jet::constant(&sp, 0.0);
    for jp in 0..m {
        for kp in 0..m {
            tr_bl = &tr_bl + &(&b[jp][kp] * &lxx[jp][kp]);
        }
    }

    // V^k
    let v_flux: Vec<CJet> = (0..m)
        .map(|k| {
            let mut acc = real(Jet::constant(&sp, 0.0));
            for j in 0..m {
                let bjk = &b[j][k];
                let s1 = (&(&v * &vb_t) - &(&vb * &v_t)).mul_real(&(bjk * &lx[j]));
                let s2 = (&(&vx[j] * &vb) - &(&vbx[j] * &v)).mul_real(&(bjk * &l_t));
                let t = (&s1 + &s2).mul_real(&beta).times_i();
                i_acc.push(t.diff(k + 1).value());
                acc = &acc - &t;
                acc = &acc - &(&(&vx[j] * &vb_t) + &(&vbx[j] * &v_t)).mul_real(&(&alpha * bjk));
                acc = &acc
                    - &(&(&vx[j] * &vb) + &(&vbx[j] * &v))
                        .mul_real(&(&tr_bl * bjk))
                        .scale(a_p);
                let w = &(&a_coef * &lx[j]) - &(&(&alpha * &lx[j]) * &l_t);
                acc = &acc + &real((&(bjk * &w) * &vv).scale(2.0));
                for jp in 0..m {
                    for kp in 0..m {
                        let c = &(&b[j][kp] * &b[jp][k]).scale(2.0) - &(bjk * &b[jp][kp]);
                        let q = &(&vx[jp] * &vbx[kp]) + &(&vbx[jp] * &vx[kp]);
                        acc = &acc + &q.mul_real(&(&c * &lx[j]));
                    }
                }
            }
            acc
        })
        .collect();

    let mut lhs = Acc::new();
    lhs.push((&(&pz * &i1b) + &(&pzb * &i1)).mul_real(&theta).value());
    lhs.push(m_q.diff(0).value());
    for (k, vk) in v_flux.iter().enumerate() {
        lhs.push(vk.diff(k + 1).value());
    }

    let mut rhs = Acc::new();
    rhs.push((i1.norm_sqr().scale(2.0).value(), 0.0));

    // gradient-gradient terms
    let alpha_t_b: Vec<Vec<Jet>> = (0..m)
        .map(|j| {
            (0..m)
                .map(|k| (&alpha * &b[j][k]).diff(0).scale(0.5))
                .collect()
        })
        .collect();
    for j in 0..m {
        for k in 0..m {
            let mut coef = alpha_t_b[j][k].clone();
            for jp in 0..m {
                for kp in 0..m {
                    coef = &coef + &(&(&b[jp][k] * &lx[jp]).diff(kp + 1) * &b[j][kp]).scale(2.0);
                    coef = &coef - &(&(&b[j][k] * &b[jp][kp]) * &lx[jp]).diff(kp + 1);
                    coef = &coef - &(&(&b[j][k] * &b[jp][kp]) * &lxx[jp][kp]).scale(a_p);
                }
            }
            let q = &(&vx[k] * &vbx[j]) + &(&vbx[k] * &vx[j]);
            rhs.push(q.mul_real(&coef).value());
        }
    }

    // [-Σ b^{jk}_{x_k} ℓ_j + bλ] (I1 v̄ + Ī1 v)
    let mut c1 = Jet::constant(&sp, b_p * lam);
    for j in 0..m {
        for k in 0..m {
            c1 = &c1 - &(&b[j][k].diff(k + 1) * &lx[j]);
        }
    }
    rhs.push((&(&i1 * &vb) + &(&i1b * &v)).mul_real(&c1).value());

    // i Σ { [(β b ℓ_j)_t + b (β ℓ_t)_j](v̄_k v - v_k v̄) + [(β b ℓ_j)_k + aβ b ℓ_jk](v̄ v_t - v v̄_t) }
    let beta_lt = &beta * &l_t;
    for j in 0..m {
        for k in 0..m {
            let bbl = &(&beta * &b[j][k]) * &lx[j];
            let c_a = &bbl.diff(0) + &(&b[j][k] * &beta_lt.diff(j + 1));
            let c_b = &bbl.diff(k + 1) + &(&(&beta * &b[j][k]) * &lxx[j][k]).scale(a_p);
            let q_a = &(&vbx[k] * &v) - &(&vx[k] * &vb);
            let q_b = &(&vb * &v_t) - &(&v * &vb_t);
            let t = (&q_a.mul_real(&c_a) + &q_b.mul_real(&c_b))
                .times_i()
                .value();
            i_acc.push(t);
            rhs.push(t);
        }
    }

    // -Σ b^{jk} α_k (v_j v̄_t + v̄_j v_t)
    for j in 0..m {
        for k in 0..m {
            let c = &b[j][k] * &alpha.diff(k + 1);
            let q = &(&vx[j] * &vb_t) + &(&vbx[j] * &v_t);
            rhs.push((-&q.mul_real(&c)).value());
        }
    }

    // -a Σ b^{jk} (b^{j'k'} ℓ_{j'k'})_k (v̄_j v + v_j v̄)
    let tr_bl_x: Vec<Jet> = (0..m)
        .map(|k| {
            let mut acc = Jet::constant(&sp, 0.0);
            for jp in 0..m {
                for kp in 0..m {
                    acc = &acc + &(&b[jp][kp] * &lx[jp].diff(kp + 1)).diff(k + 1);
                }
            }
            acc
        })
        .collect();
    for j in 0..m {
        for k in 0..m {
            let c = (&b[j][k] * &tr_bl_x[k]).scale(-a_p);
            let q = &(&vbx[j] * &v) + &(&vx[j] * &vb);
            rhs.push(q.mul_real(&c).value());
        }
    }

    // B |v|²
    let mut b_coef = (&(&ab2 * &l_t) - &(&alpha * &a_coef)).diff(0);
    for j in 0..m {
        for k in 0..m {
            let bl = &b[j][k] * &lx[j];
            let t1 = (&bl * &a_coef).diff(k + 1);
            let t2 = (&(&bl * &alpha) * &l_t).diff(k + 1);
            let t3 = (&(&(&a_coef - &(&alpha * &l_t)) * &b[j][k]) * &lxx[j][k]).scale(a_p);
            b_coef = &b_coef + &(&(&t1 - &t2) + &t3).scale(2.0);
        }
    }
    rhs.push(((&b_coef * &vv).value(), 0.0));

    let v_vals = v_flux.iter().map(CJet::value).collect();
    Ok(DetEvaluation {
        lhs: lhs.re,
        rhs: rhs.re,
        intermediates: DetIntermediates {
            i1: i1.value(),
            a: a_coef.value(),
            b: b_coef.value(),
            m: m_q.value(),
            v: v_vals,
            lhs_im: lhs.im,
            rhs_im: rhs.im,
            i_terms: i_acc.scale,
            scale: lhs.scale.max(rhs.scale),
        },
    })
}
