//! Discretization of the kernel `|x - y|^(-(1 + sp))`.
//!
//! Fields are piecewise constant, so the operator only needs the integral of the
//! kernel over each cell as seen from every cell center (the pair weights) and the
//! integral over the exterior of the domain (the tail weights). Both have closed
//! forms, so no quadrature is involved. The diagonal weight is zero: the
//! difference `u_i - u_i` vanishes on the cell that contains the singularity.

use crate::domain::{Grid, Params};
use crate::error::Result;
use crate::field::Field;
use crate::operator::phi;

/// `int_a^b |x - y|^(-(1 + sp)) dy` for a point `x` outside `[a, b]`.
pub fn cell_integral(x: f64, a: f64, b: f64, sp: f64) -> f64 {
    debug_assert!(a < b && (x <= a || x >= b));
    let (near, far) = if x <= a { (a - x, b - x) } else { (x - b, x - a) };
    power_difference(near, far, sp)
}

/// `(near^(-sp) - far^(-sp)) / sp`, evaluated without cancellation.
fn power_difference(near: f64, far: f64, sp: f64) -> f64 {
    let log_ratio = ((far - near) / near).ln_1p();
    -near.powf(-sp) * (-sp * log_ratio).exp_m1() / sp
}

/// `int_{R \ (x_left, x_right)} |x - y|^(-(1 + sp)) dy` for `x` inside the domain.
pub fn exterior_integral(left_distance: f64, right_distance: f64, sp: f64) -> f64 {
    (left_distance.powf(-sp) + right_distance.powf(-sp)) / sp
}

/// Precomputed pair and tail weights for one grid and one `(p, s)`.
#[derive(Debug, Clone)]
pub struct KernelWeights {
    grid: Grid,
    params: Params,
    pair: Vec<f64>,
    tail: Vec<f64>,
}

pub fn build_weights(g: &Grid, prm: &Params) -> KernelWeights {
    let n = g.n_cells();
    let h = g.cell_width();
    let sp = prm.sp();

    // On a uniform grid the weight only depends on |i - j|; evaluating it once per
    // offset makes the matrix exactly symmetric.
    let by_offset: Vec<f64> = (0..n)
        .map(|k| {
            if k == 0 {
                0.0
            } else {
                power_difference((k as f64 - 0.5) * h, (k as f64 + 0.5) * h, sp)
            }
        })
        .collect();

    let mut pair = vec![0.0; n * n];
    for (i, row) in pair.chunks_exact_mut(n).enumerate() {
        for (j, w) in row.iter_mut().enumerate() {
            *w = by_offset[i.abs_diff(j)];
        }
    }
    let tail = (0..n)
        .map(|i| exterior_integral(g.left_distance(i), g.right_distance(i), sp))
        .collect();

    KernelWeights {
        grid: g.clone(),
        params: *prm,
        pair,
        tail,
    }
}

impl KernelWeights {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.grid.n_cells()
    }

    pub fn h(&self) -> f64 {
        self.grid.cell_width()
    }

    pub fn pair(&self, i: usize, j: usize) -> f64 {
        self.pair[i * self.n() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.pair[i * n..(i + 1) * n]
    }

    pub fn tail(&self) -> &[f64] {
        &self.tail
    }

    pub(crate) fn check(&self, u: &Field) -> Result<()> {
        if u.grid_id() == self.grid.id() {
            Ok(())
        } else {
            Err(crate::error::Error::GridMismatch)
        }
    }
}

/// `2 sum_i Phi(u_i) T_i h`: the rate at which mass leaves the domain.
pub fn tail_mass_coefficient(kw: &KernelWeights, u: &Field) -> Result<f64> {
    kw.check(u)?;
    let p = kw.params().p();
    let s: f64 = u
        .values()
        .iter()
        .zip(kw.tail())
        .map(|(&ui, &ti)| phi(ui, p) * ti)
        .sum();
    Ok(2.0 * s * kw.h())
}
