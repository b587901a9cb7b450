//! The diagnostic suite run by `verify`: every check that applies to the configured
//! exponent, each reported as a `CheckResult`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::diagnostics::{
    check_boundary_behavior, check_contraction, check_convergence_to_profile, check_derivative_decay,
    check_domain_comparison, check_extinction, check_mass_loss, check_positivity, check_reflection,
    check_sharp_sandwich, check_time_monotonicity, check_universal_bound, fit_decay_exponent, gating_failures,
    monitor_lq_decay, profile_distance, CheckResult,
};
use crate::domain::{make_grid, scale_grid, Grid, Params};
use crate::error::Result;
use crate::evolution::{evolve, EvolveOptions, InitialData, TimeSchedule, Trajectory};
use crate::field::{Field, Norm};
use crate::kernel::{build_weights, KernelWeights};
use crate::operator::{apply_operator, energy};
use crate::profiles::{compute_eigenpair, compute_giant, GiantProfile};

/// Growth allowed for `max F / d^s` near the boundary when the grid is refined once.
const BOUNDARY_GROWTH: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub config: RunConfig,
    pub checks: Vec<CheckResult>,
    pub gating_failures: usize,
    pub passed: bool,
}

impl Report {
    pub fn new(command: &str, config: &RunConfig, checks: Vec<CheckResult>) -> Self {
        let gating = gating_failures(&checks).len();
        Self { command: command.to_string(), config: config.clone(), checks, gating_failures: gating, passed: gating == 0 }
    }

    /// Fixed-width table, one line per check.
    pub fn table(&self) -> String {
        let mut out = format!("{:<26} {:<15} detail\n", "check", "verdict");
        for c in &self.checks {
            let verdict = match (c.verdict, c.exploratory) {
                (crate::diagnostics::Verdict::Pass, _) => "pass",
                (crate::diagnostics::Verdict::NotApplicable, _) => "n/a",
                (crate::diagnostics::Verdict::Fail, true) => "fail (explor.)",
                (crate::diagnostics::Verdict::Fail, false) => "FAIL",
            };
            out.push_str(&format!("{:<26} {:<15} {}\n", c.name, verdict, c.detail));
        }
        out.push_str(&format!(
            "{} checks, {} gating failures\n",
            self.checks.len(),
            self.gating_failures
        ));
        out
    }
}

struct Setup<'a> {
    cfg: &'a RunConfig,
    prm: Params,
    kw: KernelWeights,
    opts: EvolveOptions,
}

impl Setup<'_> {
    fn run(&self, u0: &Field, sched: &TimeSchedule) -> Result<Trajectory> {
        evolve(u0, sched, &self.kw, &self.opts)
    }

    /// At most a hundred steps of ratio 1.05 from the configured start, for the checks
    /// that only need the early flow.
    fn short_schedule(&self) -> TimeSchedule {
        let t0 = self.cfg.t0;
        match self.cfg.schedule() {
            TimeSchedule::Geometric { t_end, ratio, .. } => {
                let r = ratio.max(1.05);
                TimeSchedule::Geometric { t0, t_end: t_end.min(t0 * r.powi(100)), ratio: r }
            }
            TimeSchedule::Uniform { t_end, n_steps, .. } => {
                let k = n_steps.min(100);
                TimeSchedule::Uniform { t0, t_end: t0 + (t_end - t0) * k as f64 / n_steps as f64, n_steps: k }
            }
        }
    }
}

/// Runs that stopped early (extinction) are compared on their common time levels.
fn common_prefix(a: &Trajectory, b: &Trajectory) -> Result<(Trajectory, Trajectory)> {
    let k = a.len().min(b.len());
    let cut = |t: &Trajectory| Trajectory::from_states(t.grid(), t.times()[..k].to_vec(), t.states()[..k].to_vec());
    Ok((cut(a)?, cut(b)?))
}

fn named(mut r: CheckResult, name: &str) -> CheckResult {
    r.name = name.to_string();
    r
}

/// A failed precondition becomes "not applicable"; solver failures propagate.
fn or_not_applicable(name: &str, r: Result<CheckResult>) -> Result<CheckResult> {
    match r {
        Ok(c) => Ok(c),
        Err(e) if e.is_solver_failure() => Err(e),
        Err(e) => Ok(CheckResult::not_applicable(name, e.to_string())),
    }
}

/// Central differences of the energy at random coordinates of random fields.
pub fn check_gradient_identity(kw: &KernelWeights, seed: u64, fields: usize, coords: usize, tol: f64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = kw.grid();
    let n = g.n_cells();
    let mut worst = 0.0f64;
    for _ in 0..fields {
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let field = Field::from_values(g, u.clone())?;
        let lu = apply_operator(&field, kw)?;
        let eps = 1e-5 * field.norm(Norm::LInf);
        for _ in 0..coords {
            let i = rng.random_range(0..n);
            let shifted = |d: f64| {
                let mut v = u.clone();
                v[i] += d;
                Field::from_values(g, v).and_then(|f| energy(&f, kw))
            };
            let fd = (shifted(eps)? - shifted(-eps)?) / (2.0 * eps);
            let exact = kw.h() * lu.values()[i];
            worst = worst.max((fd - exact).abs() / exact.abs());
        }
    }
    Ok(CheckResult::new(
        "gradient_identity",
        worst <= tol,
        vec![worst],
        vec![0.0],
        tol,
        format!("max relative gap between central differences of J and h L u: {worst:.3e} ({fields} fields x {coords} coordinates)"),
    ))
}

fn decay_check(traj: &Trajectory, prm: &Params) -> Result<CheckResult> {
    let target = -prm.mu()?;
    let t_last = traj.time(traj.len() - 1);
    let slope = fit_decay_exponent(traj, Norm::LInf, (t_last / 1e3, t_last))?;
    let rel = (slope - target).abs() / target.abs();
    Ok(CheckResult::new(
        "decay_exponent",
        rel <= 0.05,
        vec![slope],
        vec![target],
        0.05,
        format!("slope of log |u|_inf vs log t over the last three decades {slope:.4} (target {target:.4}, relative error {rel:.3})"),
    ))
}

fn profile_scaling(gp: &GiantProfile, kw: &KernelWeights, cfg: &RunConfig) -> Result<CheckResult> {
    let prm = kw.params();
    let big = compute_giant(&build_weights(&scale_grid(kw.grid(), 2.0)?, prm), cfg.profile_tol, cfg.profile_max_steps)?;
    let target = 2f64.powf(prm.sp() * prm.mu()?);
    let worst = big
        .profile
        .values()
        .iter()
        .zip(gp.profile.values())
        .map(|(a, b)| (a / b - target).abs() / target)
        .fold(0.0, f64::max);
    Ok(CheckResult::new(
        "profile_scaling",
        worst <= 0.02,
        vec![worst],
        vec![target],
        0.02,
        format!("max relative deviation of F on the doubled domain from {target:.6} times F: {worst:.3e}"),
    ))
}

fn eigen_checks(kw: &KernelWeights, cfg: &RunConfig) -> Result<Vec<CheckResult>> {
    let e1 = compute_eigenpair(kw, cfg.eigen_tol, cfg.eigen_max_iter)?;
    let kw2 = build_weights(&scale_grid(kw.grid(), 2.0)?, kw.params());
    let e2 = compute_eigenpair(&kw2, cfg.eigen_tol, cfg.eigen_max_iter)?;
    let rel_res = e1.residual / (e1.lambda1 * e1.phi1.norm(Norm::LInf).powf(kw.params().p() - 1.0));
    let ratio = e2.lambda1 / e1.lambda1;
    let target = 2f64.powf(-kw.params().sp());
    let rel = (ratio - target).abs() / target;
    Ok(vec![
        CheckResult::new(
            "eigen_residual",
            rel_res <= 1e-6 || (kw.params().p() < 2.0 && e1.residual <= e1.tolerance),
            vec![rel_res, e1.lambda1],
            vec![0.0],
            1e-6,
            format!(
                "lambda1 = {:.10}, relative residual {rel_res:.3e} after {} iterations (resolution limit {:.3e})",
                e1.lambda1,
                e1.iterations,
                e1.tolerance / (e1.lambda1 * e1.phi1.norm(Norm::LInf).powf(kw.params().p() - 1.0))
            ),
        ),
        CheckResult::new(
            "eigen_scaling",
            rel <= 0.01 && e2.lambda1 < e1.lambda1,
            vec![ratio],
            vec![target],
            0.01,
            format!("lambda1 ratio under doubling {ratio:.6} (target {target:.6}, relative error {rel:.2e})"),
        ),
    ])
}

/// Reflection scenarios on the interval of the same length centered at zero.
fn reflection_checks(cfg: &RunConfig, prm: &Params) -> Result<Vec<CheckResult>> {
    let r = 0.5 * (cfg.x_right - cfg.x_left);
    let g = make_grid(-r, r, cfg.n_cells)?;
    let kw = build_weights(&g, prm);
    let tau = 0.05 * r.powf(prm.sp());
    let scenarios = [
        ("reflection_symmetric", Field::from_fn(&g, |x| (1.0 - (x / r).powi(2)) * (1.0 + (6.0 * x / r).cos().powi(2)))?),
        ("reflection_one_sided", Field::from_fn(&g, |x| if x > 0.1 * r && x < 0.8 * r { 1.0 + x / r } else { 0.0 })?),
        ("reflection_radial", Field::from_fn(&g, |x| (-4.0 * (x / r).powi(2)).exp())?),
    ];
    scenarios
        .into_iter()
        .map(|(name, f)| Ok(named(check_reflection(&f, tau, &kw, 1e-12)?, name)))
        .collect()
}

/// Data on the configured interval against the same data on the interval extended by
/// half its length on both sides, with the same cell width.
fn domain_comparison(s: &Setup, u0: &Field) -> Result<CheckResult> {
    let cfg = s.cfg;
    let ext = 0.5 * (cfg.x_right - cfg.x_left);
    let outer_grid = make_grid(cfg.x_left - ext, cfg.x_right + ext, 2 * cfg.n_cells)?;
    let offset = cfg.n_cells / 2;
    let mut v = vec![0.0; 2 * cfg.n_cells];
    v[offset..offset + cfg.n_cells].copy_from_slice(u0.values());
    let outer_u0 = Field::from_values(&outer_grid, v)?;
    let outer_kw = build_weights(&outer_grid, &s.prm);
    let sched = s.short_schedule();
    let inner = s.run(u0, &sched)?;
    let outer = evolve(&outer_u0, &sched, &outer_kw, &s.opts)?;
    let (inner, outer) = common_prefix(&inner, &outer)?;
    check_domain_comparison(&inner, &outer, 1e-8)
}

/// Runs every applicable check for the configuration.
pub fn run_suite(cfg: &RunConfig) -> Result<Vec<CheckResult>> {
    let prm = cfg.params()?;
    let grid: Grid = cfg.grid()?;
    let kw = build_weights(&grid, &prm);
    let fast = prm.p() < 2.0;
    let opts = EvolveOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        stop_below: fast.then_some(1e-2 * cfg.extinction_threshold),
    };
    let s = Setup { cfg, prm, kw, opts };
    let u0 = cfg.initial_data(&s.kw)?;
    let sched = cfg.schedule();
    let mut out = vec![check_gradient_identity(&s.kw, cfg.seed, 5, 20, 1e-5)?];

    let main = s.run(&u0, &sched)?;
    out.push(check_mass_loss(&main, 1e-6));
    let center = 0.5 * (cfg.x_left + cfg.x_right);
    let other_u0 = InitialData::Indicator {
        center: center + 0.1 * (cfg.x_right - cfg.x_left),
        half_width: 0.2 * (cfg.x_right - cfg.x_left),
        amplitude: 0.8 * u0.norm(Norm::LInf).max(1.0),
    }
    .sample(&grid)?;
    let other = s.run(&other_u0, &sched)?;
    let (a, b) = common_prefix(&main, &other)?;
    out.push(check_contraction(&a, &b, 1e-8)?);

    let cell = InitialData::Cell { index: 0, amplitude: 1.0 }.sample(&grid)?;
    let cell_run = s.run(&cell, &s.short_schedule())?;
    let t1 = cell_run.time(1.min(cell_run.len() - 1));
    out.push(named(
        crate::diagnostics::check_positivity_with_margin(&cell_run, t1, 0.0),
        "positivity_first_step",
    ));
    out.push(check_positivity(&cell_run, t1));
    out.extend(reflection_checks(cfg, &prm)?);
    out.extend(eigen_checks(&s.kw, cfg)?);
    out.push(domain_comparison(&s, &u0)?);

    if fast {
        out.push(check_extinction(&main, &prm, cfg.extinction_threshold)?);
        return Ok(out);
    }
    if prm.p() == 2.0 {
        return Ok(out);
    }

    let gp = compute_giant(&s.kw, cfg.profile_tol, cfg.profile_max_steps)?;
    out.push(or_not_applicable("decay_exponent", decay_check(&main, &prm))?);
    let giant_run = s.run(&gp.profile.scaled(100.0), &sched)?;
    for (name, traj) in [("universal_bound", &main), ("universal_bound_indicator", &other), ("universal_bound_100F", &giant_run)] {
        out.push(named(check_universal_bound(traj, &gp, cfg.bound_slack)?, name));
    }
    out.push(check_convergence_to_profile(&main, &gp, cfg.convergence_tol)?);
    let e = profile_distance(&main, &gp)?;
    let last = e.last().map_or(f64::NAN, |v| v.1);
    out.push(CheckResult::new(
        "profile_cross_validation",
        last <= 0.02,
        vec![last],
        vec![0.0],
        0.02,
        format!("|t^(1/(p-2)) u(t_end) - F|_inf / |F|_inf = {last:.4e}"),
    ));
    out.push(profile_scaling(&gp, &s.kw, cfg)?);
    let fine_grid = make_grid(cfg.x_left, cfg.x_right, 2 * cfg.n_cells)?;
    let fine = compute_giant(&build_weights(&fine_grid, &prm), cfg.profile_tol, cfg.profile_max_steps)?;
    out.push(check_boundary_behavior((&gp.profile, &grid), (&fine.profile, &fine_grid), prm.s(), BOUNDARY_GROWTH));
    let origin = main.time(0);
    out.push(check_time_monotonicity(&main, &prm, origin, 1e-3)?);
    // the constant of this estimate is not pinned down, so it is only monitored
    out.push(check_derivative_decay(&main, &prm, origin, 0.05)?.exploratory());
    out.push(monitor_lq_decay(&main, prm.p(), &prm)?);
    out.push(check_sharp_sandwich(&main, &gp)?);
    Ok(out)
}
