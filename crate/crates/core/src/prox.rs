//! The implicit step `u + tau L u = f` as a strictly convex minimization.
//!
//! The step minimizes `G(u) = tau J(u) + (h/2) sum (u_i - f_i)^2`, whose gradient is
//! `h (u + tau L u - f)`. Descent directions come from the symmetric Jacobian of
//! `L` (a Newton direction on `G`), globalized by Armijo backtracking on `G`; if the
//! factorization fails the direction falls back to the negative gradient.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::kernel::KernelWeights;
use crate::operator::{apply_values, energy_values, linearization, phi_prime, phi_secant, resolution_noise};

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
/// Relative floor on differences inside the linearization.
const DERIVATIVE_FLOOR: f64 = 1e-8;
/// For p < 2 the floor starts here and follows the step length down to `MIN_FLOOR`.
const INITIAL_FLOOR: f64 = 1e-2;
const MIN_FLOOR: f64 = 1e-15;
/// Differences beyond this multiple of the floor use the exact derivative.
const SMOOTH_RANGE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxReport {
    pub iterations: usize,
    /// Euclidean norm of the optimality residual `tau L u + alpha u - b`,
    /// i.e. `|grad G| / h`.
    pub final_gradient_norm: f64,
    /// Threshold the gradient norm was required to reach. For p < 2 a full Newton
    /// step shorter than `tol max(|u|_inf, |b|_inf)` also ends the iteration.
    pub tolerance: f64,
    /// Max-norm of the same residual.
    pub residual_inf: f64,
    pub objective: f64,
    pub converged: bool,
    /// Objective after every accepted iterate, starting with the initial guess.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

/// Minimizes `tau J(u) + h sum (alpha/2 u_i^2 - b_i u_i)`; the stationarity
/// condition is `tau L u + alpha u = b`.
pub(crate) struct ConvexProblem<'a> {
    pub kw: &'a KernelWeights,
    pub tau: f64,
    pub alpha: f64,
    pub b: &'a [f64],
    /// For p < 2, hold every cell to its own noise level rather than comparing norms.
    /// Stricter; a non-smooth pair can then stall its neighbours.
    pub per_cell: bool,
}

impl ConvexProblem<'_> {
    fn objective(&self, u: &[f64]) -> f64 {
        let quad: f64 = u
            .iter()
            .zip(self.b)
            .map(|(&ui, &bi)| (0.5 * self.alpha * ui - bi) * ui)
            .sum();
        self.tau * energy_values(u, self.kw) + self.kw.h() * quad
    }

    fn residual(&self, u: &[f64]) -> Vec<f64> {
        apply_values(u, self.kw)
            .into_iter()
            .zip(u.iter().zip(self.b))
            .map(|(lu, (&ui, &bi))| self.tau * lu + self.alpha * ui - bi)
            .collect()
    }

    /// Size of the iterate, or of the data while the iterate is zero.
    fn scale(&self, u: &[f64]) -> f64 {
        let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let su = inf(u);
        if su > 0.0 {
            su
        } else {
            inf(self.b).max(f64::MIN_POSITIVE)
        }
    }

    /// For p < 2 and a step dominated by diffusion the solution is far below the data:
    /// balancing `tau L (c w) = b` for the data shape `w` gives its size `c`.
    fn diffusive_size(&self) -> Option<(f64, Vec<f64>)> {
        let p = self.kw.params().p();
        let bmax = self.b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if p >= 2.0 || self.alpha <= 0.0 || bmax == 0.0 {
            return None;
        }
        let shape: Vec<f64> = self.b.iter().map(|v| v / bmax).collect();
        let lw = apply_values(&shape, self.kw).into_iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let c = (bmax / (self.tau * lw)).powf(1.0 / (p - 1.0));
        (c.is_finite() && c < 1e-2 * bmax / self.alpha).then_some((c, shape))
    }

    fn newton_direction(&self, u: &[f64], r: &[f64], floor: f64) -> Vec<f64> {
        let n = u.len();
        let p = self.kw.params().p();
        // For p < 2 the Newton slope (p-1)|z|^(p-2) overshoots differences that are
        // small against the current step by a factor 1/(p-1); those get the secant
        // slope |z|^(p-2), whose quadratic majorizes the energy.
        let mut hess: DMatrix<f64> = if p < 2.0 {
            linearization(u, self.kw, |z| {
                if z.abs() > SMOOTH_RANGE * floor {
                    phi_prime(z, p, floor)
                } else {
                    phi_secant(z, p, floor)
                }
            })
        } else {
            linearization(u, self.kw, |z| phi_prime(z, p, floor))
        } * self.tau;
        for i in 0..n {
            hess[(i, i)] += self.alpha;
        }
        let rhs = DVector::from_iterator(n, r.iter().map(|v| -v));
        if let Some(chol) = hess.clone().cholesky() {
            return chol.solve(&rhs).iter().copied().collect();
        }
        let diag_max = (0..n).fold(0.0f64, |m, i| m.max(hess[(i, i)].abs()));
        let mut shift = 1e-12 * diag_max.max(1.0);
        while shift <= 1e-2 * diag_max.max(1.0) {
            let mut shifted = hess.clone();
            for i in 0..n {
                shifted[(i, i)] += shift;
            }
            if let Some(chol) = shifted.cholesky() {
                return chol.solve(&rhs).iter().copied().collect();
            }
            shift *= 100.0;
        }
        rhs.iter().copied().collect()
    }

    /// The problem is homogeneous: with `u = c v` it becomes the same problem for `v`
    /// with `tau c^(p-2)` and data `b / c`, and `G(u) = c^2 G'(v)`. Solving at the scale
    /// of the solution keeps tiny solutions (near extinction) away from underflow.
    pub fn minimize(&self, u: Vec<f64>, tol: f64, max_iter: usize) -> (Vec<f64>, ProxReport) {
        let (c, u) = match self.diffusive_size() {
            // Below the smallest normal double the solution is zero to working precision.
            Some((c, _)) if c < f64::MIN_POSITIVE => return self.extinct(),
            Some((c, shape)) if c < 1e-2 * self.scale(&u) => (c, shape.iter().map(|w| c * w).collect()),
            _ => (self.scale(&u), u),
        };
        if c == 1.0 || !c.is_normal() {
            return self.minimize_unscaled(u, tol, max_iter);
        }
        let b: Vec<f64> = self.b.iter().map(|v| v / c).collect();
        let scaled = ConvexProblem {
            kw: self.kw,
            tau: self.tau * c.powf(self.kw.params().p() - 2.0),
            alpha: self.alpha,
            b: &b,
            per_cell: self.per_cell,
        };
        let (v, mut report) = scaled.minimize_unscaled(u.iter().map(|x| x / c).collect(), tol, max_iter);
        let u: Vec<f64> = v.into_iter().map(|x| x * c).collect();
        let r = self.residual(&u);
        report.final_gradient_norm = norm2(&r);
        report.residual_inf = r.iter().fold(0.0, |m, v| m.max(v.abs()));
        report.tolerance *= c;
        let c2 = c * c;
        report.objective *= c2;
        report.objective_trace.iter_mut().for_each(|g| *g *= c2);
        (u, report)
    }

    /// Zero solution, accepted with the data size as tolerance.
    fn extinct(&self) -> (Vec<f64>, ProxReport) {
        let u = vec![0.0; self.b.len()];
        let r = self.residual(&u);
        let g = norm2(&r);
        let objective = self.objective(&u);
        let report = ProxReport {
            iterations: 0,
            final_gradient_norm: g,
            tolerance: g,
            residual_inf: r.iter().fold(0.0, |m, v| m.max(v.abs())),
            objective,
            converged: true,
            objective_trace: vec![objective],
        };
        (u, report)
    }

    fn minimize_unscaled(&self, mut u: Vec<f64>, tol: f64, max_iter: usize) -> (Vec<f64>, ProxReport) {
        let h = self.kw.h();
        let threshold = tol * norm2(self.b);
        let mut objective = self.objective(&u);
        let mut trace = vec![objective];
        let mut r = self.residual(&u);
        let mut gnorm = norm2(&r);
        let mut iterations = 0;
        let mut small_step = false;
        let fast = self.kw.params().p() < 2.0;
        let mut floor = if fast { INITIAL_FLOOR } else { DERIVATIVE_FLOOR } * self.scale(&u);

        // For p < 2 the residual is only Holder continuous in u: near a vanishing difference
        // it cannot resolve u to the requested relative accuracy, and that level is accepted.
        let allowed = |u: &[f64]| -> Vec<f64> {
            let slack = if self.per_cell { threshold / (u.len() as f64).sqrt() } else { 0.0 };
            resolution_noise(u, self.kw, tol * self.scale(u)).into_iter().map(|v| self.tau * v + slack).collect()
        };
        let resolved = |r: &[f64], u: &[f64]| {
            let a = allowed(u);
            if self.per_cell {
                r.iter().zip(a).all(|(ri, ai)| ri.abs() <= ai)
            } else {
                norm2(r) <= norm2(&a)
            }
        };
        let settled = |g: f64, r: &[f64], u: &[f64]| g <= threshold || (fast && resolved(r, u));

        while !settled(gnorm, &r, &u) && !small_step && iterations < max_iter {
            iterations += 1;
            let d = self.newton_direction(&u, &r, floor);
            let mut slope = h * dot(&r, &d);
            let d = if slope < 0.0 {
                d
            } else {
                slope = -h * dot(&r, &r);
                r.iter().map(|v| -v).collect()
            };

            // For p < 2 the residual is only Holder continuous in u, so rounding in u
            // alone can keep it above the threshold; a Newton direction below the
            // tolerance relative to the data then counts as convergence.
            let dir_inf = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if fast && dir_inf <= tol * self.scale(&u) {
                small_step = true;
                break;
            }

            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_BACKTRACKS {
                let trial: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + step * b).collect();
                let g_trial = self.objective(&trial);
                if g_trial <= objective + ARMIJO * step * slope {
                    accepted = Some((trial, g_trial, None));
                    break;
                }
                // Close to the minimizer the decrease drowns in rounding; fall back to
                // the residual as the merit function there.
                if g_trial <= objective + 1e-13 * objective.abs() {
                    let r_trial = self.residual(&trial);
                    if norm2(&r_trial) < gnorm {
                        accepted = Some((trial, g_trial, Some(r_trial)));
                        break;
                    }
                }
                step *= 0.5;
            }
            let Some((trial, g_trial, r_trial)) = accepted else {
                break;
            };
            let step_inf = dir_inf * step;
            if fast {
                floor = floor.min(0.1 * step_inf).max(MIN_FLOOR * self.scale(&trial));
            }
            u = trial;
            objective = g_trial;
            trace.push(objective);
            r = r_trial.unwrap_or_else(|| self.residual(&u));
            gnorm = norm2(&r);
            if !gnorm.is_finite() {
                break;
            }
        }

        let report = ProxReport {
            iterations,
            final_gradient_norm: gnorm,
            tolerance: if fast { threshold.max(norm2(&allowed(&u))) } else { threshold },
            residual_inf: r.iter().fold(0.0, |m, v| m.max(v.abs())),
            objective,
            converged: settled(gnorm, &r, &u) || small_step,
            objective_trace: trace,
        };
        (u, report)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn validate(tau: f64, tol: f64) -> Result<()> {
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::param(format!("time step must be positive, got {tau}")));
    }
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::param(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

/// Solves `u + tau L u = f`, starting from `f`.
pub fn prox_step(
    f: &Field,
    tau: f64,
    kw: &KernelWeights,
    tol: f64,
    max_iter: usize,
) -> Result<(Field, ProxReport)> {
    prox_step_from(f, tau, kw, f, tol, max_iter)
}

/// Same as [`prox_step`] with an explicit initial iterate.
pub fn prox_step_from(
    f: &Field,
    tau: f64,
    kw: &KernelWeights,
    init: &Field,
    tol: f64,
    max_iter: usize,
) -> Result<(Field, ProxReport)> {
    kw.check(f)?;
    kw.check(init)?;
    validate(tau, tol)?;
    let problem = ConvexProblem {
        kw,
        tau,
        alpha: 1.0,
        b: f.values(),
        per_cell: false,
    };
    let (u, report) = problem.minimize(init.values().to_vec(), tol, max_iter);
    if !report.converged {
        return Err(Error::ProxNotConverged(Box::new(report)));
    }
    Ok((Field::with_id(f.grid_id(), u)?, report))
}

/// `|u + tau L u - f|_inf`.
pub fn prox_residual(u: &Field, f: &Field, tau: f64, kw: &KernelWeights) -> Result<f64> {
    kw.check(u)?;
    kw.check(f)?;
    let lu = apply_values(u.values(), kw);
    Ok(u.values()
        .iter()
        .zip(&lu)
        .zip(f.values())
        .map(|((&ui, &li), &fi)| (ui + tau * li - fi).abs())
        .fold(0.0, f64::max))
}
