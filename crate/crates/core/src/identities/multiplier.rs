//! The multiplier identity for the wave operator with a `C¹` vector field `h`.
//!
//! `∇·{2(h·∇z)∇z + h[z_t² - |∇z|²]} = -2(z_tt - Δz) h·∇z + (2z_t h·∇z)_t
//!  - 2z_t h_t·∇z + (∇·h)[z_t² - |∇z|²] + 2Σ_{i,j} ∂_i h^j z_i z_j`.

use crate::error::{arg, Result};
use crate::polyjet::{Jet, JetSpace, MultiPoly};

/// Both sides of the multiplier identity at `pt = (t, x_1, .., x_m)`.
pub fn eval_multiplier_identity(h: &[MultiPoly], z: &MultiPoly, pt: &[f64]) -> Result<(f64, f64)> {
    let m = h.len();
    let dims = m + 1;
    if m == 0 {
        return arg("vector field must have at least one component");
    }
    if z.dims() != dims || h.iter().any(|p| p.dims() != dims) {
        return arg(format!("z and every component of h need {dims} variables"));
    }
    if pt.len() != dims {
        return arg(format!(
            "sample point has {} coordinates, expected {dims}",
            pt.len()
        ));
    }
    let sp = JetSpace::new(dims, 3);
    let zj = z.taylor(&sp, pt)?;
    let hj: Vec<Jet> = h.iter().map(|p| p.taylor(&sp, pt)).collect::<Result<_>>()?;
    let z_t = zj.diff(0);
    let zx: Vec<Jet> = (0..m).map(|i| zj.diff(i + 1)).collect();

    let mut h_grad = Jet::zero(&sp);
    let mut grad2 = Jet::zero(&sp);
    for i in 0..m {
        h_grad = &h_grad + &(&hj[i] * &zx[i]);
        grad2 = &grad2 + &zx[i].square();
    }
    let energy = &z_t.square() - &grad2;

    let mut lhs = 0.0;
    for i in 0..m {
        let flux = &(&h_grad * &zx[i]).scale(2.0) + &(&hj[i] * &energy);
        lhs += flux.diff(i + 1).value();
    }

    let mut box_z = z_t.diff(0).value();
    let mut div_h = 0.0;
    let mut ht_grad = 0.0;
    let mut cross = 0.0;
    for i in 0..m {
        box_z -= zx[i].diff(i + 1).value();
        div_h += hj[i].diff(i + 1).value();
        ht_grad += hj[i].diff(0).value() * zx[i].value();
        for j in 0..m {
            cross += hj[j].diff(i + 1).value() * zx[i].value() * zx[j].value();
        }
    }
    let rhs = -2.0 * box_z * h_grad.value() + (&z_t * &h_grad).scale(2.0).diff(0).value()
        - 2.0 * z_t.value() * ht_grad
        + div_h * energy.value()
        + 2.0 * cross;
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_gives_zero_sides() {
        let z = MultiPoly::var(3, 1).scale(2.0) + MultiPoly::var(3, 0) * MultiPoly::var(3, 2);
        let h = vec![MultiPoly::zero(3), MultiPoly::zero(3)];
        let (l, r) = eval_multiplier_identity(&h, &z, &[0.2, -0.4, 0.9]).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn zero_solution_gives_zero_sides() {
        let h = vec![MultiPoly::var(2, 1)];
        let (l, r) = eval_multiplier_identity(&h, &MultiPoly::zero(2), &[0.1, 0.5]).unwrap();
        assert_eq!((l, r), (0.0, 0.0));
    }

    #[test]
    fn dimension_mismatch() {
        let h = vec![MultiPoly::var(3, 1)];
        assert!(eval_multiplier_identity(&h, &MultiPoly::zero(3), &[0.0, 0.0, 0.0]).is_err());
    }
}
