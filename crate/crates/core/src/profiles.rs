//! Self-similar profile `F` (stationary rescaled state, `L F = mu F`) and the first
//! eigenpair of the Rayleigh quotient.

use serde::{Deserialize, Serialize};

use crate::domain::Params;
use crate::error::{Error, Result};
use crate::field::{Field, Norm};
use crate::kernel::KernelWeights;
use crate::operator::{abs_pow, apply_values, phi, rayleigh_quotient, resolution_noise};
use crate::prox::{prox_step_from, ConvexProblem};

/// Default pseudo-time step of the profile march.
pub const GIANT_DTAU: f64 = 0.1;
const MIN_DTAU: f64 = 1e-4;
const INNER_TOL: f64 = 1e-13;
const INNER_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GiantProfile {
    pub profile: Field,
    /// `1 / (p - 2)`.
    pub mu: f64,
    /// `|L F - mu F|_inf / |mu F|_inf`.
    pub residual: f64,
    pub iterations: usize,
    /// Pseudo-time step in use when the march stopped.
    pub dtau: f64,
}

/// `|L F - mu F|_inf / |mu F|_inf`.
pub fn giant_residual(f: &Field, kw: &KernelWeights) -> Result<f64> {
    kw.check(f)?;
    let mu = kw.params().mu()?;
    let lf = apply_values(f.values(), kw);
    let num = lf
        .iter()
        .zip(f.values())
        .fold(0.0f64, |m, (l, v)| m.max((l - mu * v).abs()));
    let den = mu * f.norm(Norm::LInf);
    if den == 0.0 {
        return Err(Error::param("profile residual of the zero field"));
    }
    Ok(num / den)
}

/// Marches `v' + (p - 2) L v = v` from `v = 1` with the semi-implicit step
/// `v_new + dtau (p - 2) L v_new = (1 + dtau) v` until the step change drops to
/// `tol * dtau` and the stationary residual to `tol`.
pub fn compute_giant(kw: &KernelWeights, tol: f64, max_steps: usize) -> Result<GiantProfile> {
    let prm = *kw.params();
    let mu = prm.mu()?;
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::param(format!("tolerance must be positive, got {tol}")));
    }
    let grid = kw.grid();
    let mut v = Field::from_fn(grid, |_| 1.0)?;
    let mut dtau = GIANT_DTAU;
    let mut residual = f64::INFINITY;

    for step in 1..=max_steps {
        let rhs = v.scaled(1.0 + dtau);
        let next = loop {
            match prox_step_from(&rhs, dtau * (prm.p() - 2.0), kw, &v, INNER_TOL, INNER_MAX_ITER) {
                Ok((u, _)) => break u,
                Err(e) if e.is_solver_failure() && dtau > MIN_DTAU => dtau *= 0.5,
                Err(e) => return Err(e),
            }
        };
        let change = next
            .values()
            .iter()
            .zip(v.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        v = next;
        if change <= tol * dtau * v.norm(Norm::LInf).max(1.0) {
            residual = giant_residual(&v, kw)?;
            if residual <= tol {
                return Ok(GiantProfile {
                    profile: v,
                    mu,
                    residual,
                    iterations: step,
                    dtau,
                });
            }
        }
    }
    if residual.is_infinite() {
        residual = giant_residual(&v, kw)?;
    }
    Err(Error::NotConverged {
        what: "profile march",
        iterations: max_steps,
        residual,
    })
}

/// Maps a solution of `L F = mu F` to the solution of `L f = f`: `f = mu^(-1/(p-2)) F`.
pub fn normalize_profile(f1: &Field, prm: &Params) -> Result<Field> {
    let mu = prm.mu()?;
    nonzero(f1)?;
    Ok(f1.scaled(mu.powf(-1.0 / (prm.p() - 2.0))))
}

/// Inverse of [`normalize_profile`].
pub fn denormalize_profile(f: &Field, prm: &Params) -> Result<Field> {
    let mu = prm.mu()?;
    nonzero(f)?;
    Ok(f.scaled(mu.powf(1.0 / (prm.p() - 2.0))))
}

fn nonzero(f: &Field) -> Result<()> {
    if f.is_zero() {
        Err(Error::param("profile normalization of the zero field"))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub lambda1: f64,
    /// Nonnegative, `|phi|_p = 1`.
    pub phi1: Field,
    /// `|L phi - lambda Phi(phi)|_inf`.
    pub residual: f64,
    /// Largest per-cell level the residual was held to; above the relative target only for p < 2.
    pub tolerance: f64,
    pub iterations: usize,
}

/// `|L phi - lambda Phi(phi)|_inf`.
pub fn eigen_residual(phi1: &Field, lambda: f64, kw: &KernelWeights) -> Result<f64> {
    kw.check(phi1)?;
    let p = kw.params().p();
    let l = apply_values(phi1.values(), kw);
    Ok(l.iter()
        .zip(phi1.values())
        .fold(0.0f64, |m, (lv, &v)| m.max((lv - lambda * phi(v, p)).abs())))
}

/// Nonlinear inverse iteration: solve `L u = Phi(phi_k)` (a convex minimization),
/// set `phi_{k+1} = |u| / |u|_p`. Each accepted iterate lowers the Rayleigh quotient,
/// or the relative residual once the quotient is flat to rounding; the iteration ends
/// once `|L phi - lambda Phi(phi)|_inf <= tol lambda |Phi(phi)|_inf`. For p < 2 a residual
/// that a change of `tol |phi|_inf` in `phi` could produce is accepted as well, cell by cell.
pub fn compute_eigenpair(kw: &KernelWeights, tol: f64, max_iter: usize) -> Result<EigenPair> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::param(format!("tolerance must be positive, got {tol}")));
    }
    let p = kw.params().p();
    let g = kw.grid();
    let (xl, xr) = (g.x_left(), g.x_right());
    let mut phi_k = lp_normalize(Field::from_fn(g, |x| ((x - xl) * (xr - x)).sqrt())?, p)?;
    let mut lambda = rayleigh_quotient(&phi_k, kw)?;

    for it in 1..=max_iter {
        let l = apply_values(phi_k.values(), kw);
        let cell_res: Vec<f64> = l.iter().zip(phi_k.values()).map(|(lv, &v)| (lv - lambda * phi(v, p)).abs()).collect();
        let res = cell_res.iter().fold(0.0f64, |m, &r| m.max(r));
        let phi_inf = phi(phi_k.norm(Norm::LInf), p);
        let floor = tol * lambda * phi_inf;
        // Cell by cell, since the noise is largest next to the boundary.
        let allowed: Vec<f64> = if p < 2.0 {
            let n = resolution_noise(phi_k.values(), kw, tol * phi_k.norm(Norm::LInf));
            n.into_iter().map(|v| v.max(floor)).collect()
        } else {
            vec![floor; cell_res.len()]
        };
        if cell_res.iter().zip(&allowed).all(|(r, a)| r <= a) {
            return Ok(EigenPair {
                lambda1: lambda,
                phi1: phi_k,
                residual: res,
                tolerance: allowed.into_iter().fold(0.0, f64::max),
                iterations: it - 1,
            });
        }

        let b: Vec<f64> = phi_k.values().iter().map(|&v| phi(v, p)).collect();
        let problem = ConvexProblem {
            kw,
            tau: 1.0,
            alpha: 0.0,
            b: &b,
            // the warm start is near exact, so a norm comparison would accept it unchanged
            per_cell: true,
        };
        // exact for an eigenfunction: L (c phi) = c^(p-1) lambda Phi(phi) with c = lambda^(-1/(p-1))
        let guess: Vec<f64> = phi_k.values().iter().map(|v| v * lambda.powf(-1.0 / (p - 1.0))).collect();
        let (u, report) = problem.minimize(guess, 1e-2 * tol, INNER_MAX_ITER);
        if !report.converged {
            return Err(Error::ProxNotConverged(Box::new(report)));
        }
        let candidate = lp_normalize(Field::from_values(g, u.iter().map(|v| v.abs()).collect())?, p)?;
        let q = rayleigh_quotient(&candidate, kw)?;
        if q > lambda * (1.0 - 1e-14) {
            // The quotient is flat to second order near the minimizer, so below
            // rounding of the quotient the residual decides.
            let cand_res = eigen_residual(&candidate, q, kw)?;
            let cand_inf = phi(candidate.norm(Norm::LInf), p);
            if cand_res / (q * cand_inf) >= res / (lambda * phi_inf) {
                return Err(Error::NotConverged {
                    what: "eigenpair",
                    iterations: it,
                    residual: res / (lambda * phi_inf),
                });
            }
        }
        phi_k = candidate;
        lambda = q;
    }
    let res = eigen_residual(&phi_k, lambda, kw)?;
    Err(Error::NotConverged {
        what: "eigenpair",
        iterations: max_iter,
        residual: res / (lambda * phi(phi_k.norm(Norm::LInf), p)),
    })
}

fn lp_normalize(f: Field, p: f64) -> Result<Field> {
    let h = f.grid_id().cell_width();
    let norm = f.values().iter().map(|&v| abs_pow(v, p)).sum::<f64>() * h;
    if norm == 0.0 {
        return Err(Error::param("cannot normalize the zero field"));
    }
    Ok(f.scaled(norm.powf(-1.0 / p)))
}
