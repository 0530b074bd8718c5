use nalgebra::DMatrix;
use rand::RngExt;

use crate::error::{arg, Result};
use crate::polyjet::seeded_rng;

/// `y' = A y + B u`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearODE {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LinearODE {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || b.nrows() != a.nrows() {
            return arg(format!(
                "A is {}x{} and B is {}x{}; need A square with as many rows as B",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            ));
        }
        Ok(Self { a, b })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// `[B, AB, …, A^{n-1}B]`.
    pub fn controllability_matrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        let m = self.b.ncols();
        let mut out = DMatrix::zeros(n, n * m);
        let mut block = self.b.clone();
        for k in 0..n {
            out.view_mut((0, k * m), (n, m)).copy_from(&block);
            block = &self.a * block;
        }
        out
    }
}

/// Numerical rank by Gaussian elimination with complete pivoting; pivots below
/// `1e-10` times the first pivot count as zero.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let mut w = m.clone();
    let (rows, cols) = w.shape();
    let mut first = 0.0;
    for k in 0..rows.min(cols) {
        let mut best = (k, k, 0.0f64);
        for i in k..rows {
            for j in k..cols {
                if w[(i, j)].abs() > best.2 {
                    best = (i, j, w[(i, j)].abs());
                }
            }
        }
        if k == 0 {
            first = best.2;
        }
        if best.2 == 0.0 || best.2 <= 1e-10 * first {
            return k;
        }
        w.swap_rows(k, best.0);
        w.swap_columns(k, best.1);
        let p = w[(k, k)];
        for i in k + 1..rows {
            let f = w[(i, k)] / p;
            if f != 0.0 {
                for j in k..cols {
                    let v = w[(k, j)];
                    w[(i, j)] -= f * v;
                }
            }
        }
    }
    rows.min(cols)
}

/// Rank of the controllability matrix.
pub fn kalman_rank(sys: &LinearODE) -> usize {
    numerical_rank(&sys.controllability_matrix())
}

/// `W(T) = ∫₀ᵀ e^{At} B Bᵀ e^{Aᵀt} dt`, integrating `W' = AW + WAᵀ + BBᵀ` with classical
/// Runge–Kutta on 2000 steps and symmetrizing after each step.
pub fn controllability_gramian(sys: &LinearODE, horizon: f64) -> Result<DMatrix<f64>> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return arg("the Gramian horizon must be positive");
    }
    let steps = 2000;
    let dt = horizon / steps as f64;
    let a = &sys.a;
    let bb = &sys.b * sys.b.transpose();
    let rhs = |w: &DMatrix<f64>| a * w + w * a.transpose() + &bb;
    let n = sys.dim();
    let mut w = DMatrix::zeros(n, n);
    for _ in 0..steps {
        let k1 = rhs(&w);
        let k2 = rhs(&(&w + &k1 * (0.5 * dt)));
        let k3 = rhs(&(&w + &k2 * (0.5 * dt)));
        let k4 = rhs(&(&w + &k3 * dt));
        w += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        w = (&w + w.transpose()) * 0.5;
    }
    Ok(w)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn lambda_min(w: &DMatrix<f64>) -> f64 {
    if w.is_empty() {
        return 0.0;
    }
    w.clone().symmetric_eigen().eigenvalues.min()
}

/// Random integer system with `n` states: entries of `A` and `B` drawn from `{-2, .., 2}`,
/// with one or two inputs. A quarter of the draws decouple the last state from the others
/// and from the input, and another quarter use `A = 2I` with a single input, so both
/// controllable and uncontrollable systems occur.
pub fn random_system(seed: u64, n: usize) -> Result<LinearODE> {
    if n == 0 {
        return arg("a system needs at least one state");
    }
    let mut rng = seeded_rng(seed);
    let m = rng.random_range(1..=2usize);
    let mut a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2i32..=2) as f64);
    let mut b = DMatrix::from_fn(n, m, |_, _| rng.random_range(-2i32..=2) as f64);
    match rng.random_range(0..4) {
        0 if n > 1 => {
            let k = n - 1;
            for j in 0..k {
                a[(k, j)] = 0.0;
            }
            b.row_mut(k).fill(0.0);
        }
        1 => {
            a = DMatrix::identity(n, n) * 2.0;
            b = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-2i32..=2) as f64);
        }
        _ => {}
    }
    LinearODE::new(a, b)
}
