//! Finite-difference assembly of the spatial operators.

use super::coef::CoefficientField;
use super::grid::Grid;
use crate::linalg::BandMatrix;

/// Unknowns of a wave discretization: interior nodes, optionally preceded and followed by
/// the endpoint nodes of a 1D interval when those carry a damping boundary condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DofLayout {
    pub interior: usize,
    pub left: bool,
    pub right: bool,
}

impl DofLayout {
    pub fn interior_only(grid: &Grid) -> Self {
        Self {
            interior: grid.len(),
            left: false,
            right: false,
        }
    }

    pub fn len(&self) -> usize {
        self.interior + self.left as usize + self.right as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn offset(&self) -> usize {
        self.left as usize
    }

    pub fn interior_slice<'a>(&self, v: &'a [f64]) -> &'a [f64] {
        &v[self.offset()..self.offset() + self.interior]
    }

    /// Embeds interior values, with zeros on the boundary unknowns.
    pub fn embed(&self, interior: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        v[self.offset()..self.offset() + self.interior].copy_from_slice(interior);
        v
    }
}

/// Lumped mass: the cell measure at interior nodes, half of it at boundary unknowns.
pub fn mass(grid: &Grid, layout: &DofLayout) -> Vec<f64> {
    let mut m = vec![grid.cell(); layout.len()];
    if layout.left {
        m[0] = 0.5 * grid.cell();
    }
    if layout.right {
        let k = layout.len() - 1;
        m[k] = 0.5 * grid.cell();
    }
    m
}

/// Stiffness matrix `K` with `yᵀ K y = cell · Σ_edges p_e (Δy / h)²`, edges to Dirichlet
/// boundary nodes included.
pub fn stiffness(grid: &Grid, coef: &CoefficientField, layout: &DofLayout) -> BandMatrix {
    let n = grid.n();
    let h = grid.h();
    let cell = grid.cell();
    let off = layout.offset();
    let bw = if grid.dim() == 1 { 1 } else { n[0] };
    let mut k = BandMatrix::zeros(layout.len(), bw);
    let mut edge = |a: Option<usize>, b: Option<usize>, pa: &[f64], pb: &[f64], hh: f64| {
        let w = cell * coef.edge_diffusivity(pa, pb) / (hh * hh);
        if let Some(i) = a {
            k.add(i, i, w);
        }
        if let Some(j) = b {
            k.add(j, j, w);
        }
        if let (Some(i), Some(j)) = (a, b) {
            k.add(i, j, -w);
            k.add(j, i, -w);
        }
    };
    if grid.dim() == 1 {
        let ext = grid.extents()[0];
        let left = if layout.left { Some(0) } else { None };
        let right = if layout.right {
            Some(layout.len() - 1)
        } else {
            None
        };
        edge(left, Some(off), &[0.0], &grid.point(0), h[0]);
        for i in 0..n[0] - 1 {
            edge(
                Some(off + i),
                Some(off + i + 1),
                &grid.point(i),
                &grid.point(i + 1),
                h[0],
            );
        }
        edge(
            Some(off + n[0] - 1),
            right,
            &grid.point(n[0] - 1),
            &[ext],
            h[0],
        );
    } else {
        let ext = grid.extents();
        for j in 0..n[1] {
            for i in 0..=n[0] {
                let xa = [i as f64 * h[0], (j + 1) as f64 * h[1]];
                let xb = [(i + 1) as f64 * h[0], xa[1]];
                let a = (i > 0).then(|| grid.index(i - 1, j));
                let b = (i < n[0]).then(|| grid.index(i, j));
                let xb = if i == n[0] { [ext[0], xb[1]] } else { xb };
                edge(a, b, &xa, &xb, h[0]);
            }
        }
        for i in 0..n[0] {
            for j in 0..=n[1] {
                let xa = [(i + 1) as f64 * h[0], j as f64 * h[1]];
                let xb = [xa[0], (j + 1) as f64 * h[1]];
                let a = (j > 0).then(|| grid.index(i, j - 1));
                let b = (j < n[1]).then(|| grid.index(i, j));
                let xb = if j == n[1] { [xb[0], ext[1]] } else { xb };
                edge(a, b, &xa, &xb, h[1]);
            }
        }
    }
    k
}

/// Heat generator `L(t) y = ∇·(p∇y) + a(t) y + a₁(t)·∇y` on interior nodes, with an optional
/// extra diagonal potential.
pub fn heat_generator(
    grid: &Grid,
    coef: &CoefficientField,
    neg_laplacian: &BandMatrix,
    t: f64,
    extra: Option<&[f64]>,
) -> BandMatrix {
    let mut l = neg_laplacian.scaled(-1.0 / grid.cell());
    let n = grid.n();
    let h = grid.h();
    for k in 0..grid.len() {
        let x = grid.point(k);
        let mut a = coef.potential_at(t, &x);
        if let Some(e) = extra {
            a += e[k];
        }
        l.add(k, k, a);
        if let Some(conv) = &coef.convection {
            let v = conv(t, &x);
            let i = k % n[0];
            let j = k / n[0];
            if i > 0 {
                l.add(k, k - 1, -v[0] / (2.0 * h[0]));
            }
            if i + 1 < n[0] {
                l.add(k, k + 1, v[0] / (2.0 * h[0]));
            }
            if grid.dim() == 2 {
                if j > 0 {
                    l.add(k, k - n[0], -v[1] / (2.0 * h[1]));
                }
                if j + 1 < n[1] {
                    l.add(k, k + n[0], v[1] / (2.0 * h[1]));
                }
            }
        }
    }
    l
}
