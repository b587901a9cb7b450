//! The discrete operator, its energy, and the quantities derived from them.
//!
//! With pair weights `W` and tail weights `T`:
//!
//! ```text
//! (L u)_i = 2 [ sum_j Phi(u_i - u_j) W_ij + Phi(u_i) T_i ]
//! J(u)    = (1/p) [ sum_i sum_j |u_i - u_j|^p W_ij h + 2 sum_i |u_i|^p T_i h ]
//! ```
//!
//! so that `grad J = h L u` holds exactly. Rows are independent reductions with a
//! fixed summation order, which keeps the parallel path bitwise reproducible.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::kernel::KernelWeights;

/// Grids at least this large evaluate rows in parallel.
pub const PARALLEL_MIN_CELLS: usize = 256;

/// `Phi(z) = |z|^(p-2) z`.
#[inline]
pub fn phi(z: f64, p: f64) -> f64 {
    if p == 3.0 {
        z.abs() * z
    } else if p == 4.0 {
        z * z * z
    } else if p == 2.0 {
        z
    } else if z == 0.0 {
        0.0
    } else {
        z.abs().powf(p - 2.0) * z
    }
}

#[inline]
pub(crate) fn abs_pow(z: f64, p: f64) -> f64 {
    if p == 3.0 {
        let a = z.abs();
        a * a * a
    } else if p == 4.0 {
        let z2 = z * z;
        z2 * z2
    } else if p == 2.0 {
        z * z
    } else {
        z.abs().powf(p)
    }
}

/// `Phi'(z) = (p-1) |z|^(p-2)`, with `|z|` floored at `floor` (needed when p < 2,
/// where the derivative is unbounded at zero).
#[inline]
pub(crate) fn phi_prime(z: f64, p: f64, floor: f64) -> f64 {
    if p == 3.0 {
        2.0 * z.abs()
    } else if p == 4.0 {
        3.0 * z * z
    } else if p == 2.0 {
        1.0
    } else {
        (p - 1.0) * z.abs().max(floor).powf(p - 2.0)
    }
}

fn map_rows<F>(n: usize, row: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    if n >= PARALLEL_MIN_CELLS {
        (0..n).into_par_iter().map(row).collect()
    } else {
        (0..n).map(row).collect()
    }
}

pub(crate) fn apply_values(u: &[f64], kw: &KernelWeights) -> Vec<f64> {
    let p = kw.params().p();
    let tail = kw.tail();
    map_rows(u.len(), |i| {
        let ui = u[i];
        let mut acc = 0.0;
        for (&uj, &w) in u.iter().zip(kw.row(i)) {
            acc += phi(ui - uj, p) * w;
        }
        2.0 * (acc + phi(ui, p) * tail[i])
    })
}

pub(crate) fn energy_values(u: &[f64], kw: &KernelWeights) -> f64 {
    let p = kw.params().p();
    let tail = kw.tail();
    let rows = map_rows(u.len(), |i| {
        let ui = u[i];
        let mut acc = 0.0;
        for (&uj, &w) in u.iter().zip(kw.row(i)) {
            acc += abs_pow(ui - uj, p) * w;
        }
        acc + 2.0 * abs_pow(ui, p) * tail[i]
    });
    rows.iter().sum::<f64>() * kw.h() / p
}

/// Jacobian of `u -> L u`: symmetric, weakly diagonally dominant.
#[cfg(test)]
pub(crate) fn jacobian_values(u: &[f64], kw: &KernelWeights, floor: f64) -> DMatrix<f64> {
    let p = kw.params().p();
    linearization(u, kw, |z| phi_prime(z, p, floor))
}

/// For p < 2: a bound on how much `(L u)_i` can move when every value of `u` moves by
/// at most `delta`, from the concavity of `|z|^(p-1)`. Differences near zero dominate,
/// which is where the residual stops resolving `u`.
pub(crate) fn resolution_noise(u: &[f64], kw: &KernelWeights, delta: f64) -> Vec<f64> {
    let p = kw.params().p();
    let tail = kw.tail();
    let bump = |z: f64, d: f64| abs_pow(z.abs() + d, p - 1.0) - abs_pow(z, p - 1.0);
    map_rows(u.len(), |i| {
        let ui = u[i];
        let mut acc = 0.0;
        for (&uj, &w) in u.iter().zip(kw.row(i)) {
            acc += bump(ui - uj, 2.0 * delta) * w;
        }
        2.0 * (acc + bump(ui, delta) * tail[i])
    })
}

/// `|z|^(p-2)`, i.e. `Phi(z) / z`, with `|z|` floored.
pub(crate) fn phi_secant(z: f64, p: f64, floor: f64) -> f64 {
    z.abs().max(floor).powf(p - 2.0)
}

/// Matrix of the linear operator obtained by replacing `Phi(z)` with `slope(z) z`
/// around the differences of `u`; `slope = Phi'` gives the Jacobian of `L`.
pub(crate) fn linearization(u: &[f64], kw: &KernelWeights, slope: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let n = u.len();
    let tail = kw.tail();
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let ui = u[i];
        let row = kw.row(i);
        let mut diag = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let c = 2.0 * slope(ui - u[j]) * row[j];
            jac[(i, j)] = -c;
            diag += c;
        }
        jac[(i, i)] = diag + 2.0 * slope(ui) * tail[i];
    }
    jac
}

/// `L u` on the grid of `kw`.
pub fn apply_operator(u: &Field, kw: &KernelWeights) -> Result<Field> {
    kw.check(u)?;
    Field::with_id(u.grid_id(), apply_values(u.values(), kw))
}

/// Gagliardo energy `J(u)`, including the exterior contribution.
pub fn energy(u: &Field, kw: &KernelWeights) -> Result<f64> {
    kw.check(u)?;
    Ok(energy_values(u.values(), kw))
}

/// The pairing `<L u, w>` written as the double sum over differences.
pub fn weak_form(u: &Field, w: &Field, kw: &KernelWeights) -> Result<f64> {
    kw.check(u)?;
    kw.check(w)?;
    let p = kw.params().p();
    let (u, w) = (u.values(), w.values());
    let tail = kw.tail();
    let rows = map_rows(u.len(), |i| {
        let mut acc = 0.0;
        for (j, &wij) in kw.row(i).iter().enumerate() {
            acc += phi(u[i] - u[j], p) * (w[i] - w[j]) * wij;
        }
        acc + 2.0 * phi(u[i], p) * w[i] * tail[i]
    });
    Ok(rows.iter().sum::<f64>() * kw.h())
}

/// `p J(phi) / sum |phi_i|^p h`.
pub fn rayleigh_quotient(phi_f: &Field, kw: &KernelWeights) -> Result<f64> {
    kw.check(phi_f)?;
    if phi_f.is_zero() {
        return Err(Error::param("the Rayleigh quotient is undefined for the zero field"));
    }
    let p = kw.params().p();
    let denom: f64 = phi_f.values().iter().map(|&v| abs_pow(v, p)).sum::<f64>() * kw.h();
    Ok(p * energy_values(phi_f.values(), kw) / denom)
}
