//! The scalar-weight identity `2e^{-λt} ẋ·x = d/dt(e^{-λt}|x|²) + λe^{-λt}|x|²`.

use crate::error::{arg, Result};
use crate::polyjet::{Jet, JetSpace, MultiPoly};

/// Both sides of the weighted energy identity for a curve `x(t)` at time `t`.
///
/// Each component of `x_path` may have any variable count but must depend on
/// variable 0 only; it is evaluated at `(t, 0, .., 0)`.
pub fn eval_ode_identity(lambda: f64, x_path: &[MultiPoly], t: f64) -> Result<(f64, f64)> {
    let Some(first) = x_path.first() else {
        return Ok((0.0, 0.0));
    };
    let dims = first.dims();
    for p in x_path {
        if p.dims() != dims {
            return arg("curve components have different variable counts");
        }
        if (1..dims).any(|ax| p.degree_in(ax).unwrap_or(0) > 0) {
            return arg("curve components must depend on t only");
        }
    }
    let sp = JetSpace::new(dims, 2);
    let mut pt = vec![0.0; dims];
    pt[0] = t;
    let weight = Jet::variable(&sp, 0, t).scale(-lambda).exp();
    let mut lhs = 0.0;
    let mut norm2 = Jet::zero(&sp);
    for p in x_path {
        let x = p.taylor(&sp, &pt)?;
        lhs += 2.0 * weight.value() * x.diff(0).value() * x.value();
        norm2 = &norm2 + &x.square();
    }
    let wn = &weight * &norm2;
    let rhs = wn.diff(0).value() + lambda * wn.value();
    Ok((lhs, rhs))
}
