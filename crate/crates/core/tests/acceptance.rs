//! Acceptance suite. Every criterion prints one PASS/FAIL line; the process exits
//! nonzero if a gating criterion fails. Long runs are shared between criteria.

use std::sync::OnceLock;
use std::time::Instant;

use fracplap::diagnostics::{
    check_contraction, check_convergence_to_profile, check_extinction, check_mass_loss, check_positivity,
    check_positivity_with_margin, check_reflection, check_sharp_sandwich, check_time_monotonicity,
    check_universal_bound, fit_decay_exponent, profile_distance,
};
use fracplap::profiles::{compute_eigenpair, compute_giant, GiantProfile};
use fracplap::{
    apply_operator, build_weights, energy, evolve, make_grid, prox_step, scale_grid, EvolveOptions, Field, Grid,
    InitialData, KernelWeights, Norm, Params, TimeSchedule, Trajectory,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const N: usize = 200;
/// Geometric ratio of the long runs; backward Euler lags a self-similar solution by a
/// factor close to this ratio, so it is kept well inside the 2% tolerances.
const RATIO: f64 = 1.005;
const T0: f64 = 1e-3;
const T_END: f64 = 1e3;
const PROFILE_TOL: f64 = 1e-10;

struct Outcome {
    passed: bool,
    gating: bool,
    detail: String,
}

impl Outcome {
    fn gate(passed: bool, detail: String) -> Self {
        Self { passed, gating: true, detail }
    }
}

fn unit_weights(p: f64, s: f64) -> KernelWeights {
    build_weights(&make_grid(0.0, 1.0, N).unwrap(), &Params::new(p, s).unwrap())
}

fn bump(g: &Grid) -> Field {
    InitialData::Bump { center: 0.5, half_width: 0.3, amplitude: 1.0 }.sample(g).unwrap()
}

fn long_schedule() -> TimeSchedule {
    TimeSchedule::Geometric { t0: T0, t_end: T_END, ratio: RATIO }
}

fn run(u0: &Field, sched: &TimeSchedule, kw: &KernelWeights) -> Trajectory {
    evolve(u0, sched, kw, &EvolveOptions::default()).unwrap()
}

fn kw3() -> &'static KernelWeights {
    static KW: OnceLock<KernelWeights> = OnceLock::new();
    KW.get_or_init(|| unit_weights(3.0, 0.5))
}

fn giant3() -> &'static GiantProfile {
    static GP: OnceLock<GiantProfile> = OnceLock::new();
    GP.get_or_init(|| compute_giant(kw3(), PROFILE_TOL, 20_000).unwrap())
}

fn bump_run3() -> &'static Trajectory {
    static TR: OnceLock<Trajectory> = OnceLock::new();
    TR.get_or_init(|| run(&bump(kw3().grid()), &long_schedule(), kw3()))
}

// 1
fn gradient_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for p in [2.5, 3.0, 4.0] {
        for s in [0.25, 0.5, 0.75] {
            let kw = unit_weights(p, s);
            let h = kw.h();
            for _ in 0..5 {
                let u: Vec<f64> = (0..N).map(|_| rng.random_range(-1.0..1.0)).collect();
                let field = Field::from_values(kw.grid(), u.clone()).unwrap();
                let lu = apply_operator(&field, &kw).unwrap();
                let eps = 1e-5 * field.norm(Norm::LInf);
                for _ in 0..20 {
                    let i = rng.random_range(0..N);
                    let shifted = |d: f64| {
                        let mut v = u.clone();
                        v[i] += d;
                        energy(&Field::from_values(kw.grid(), v).unwrap(), &kw).unwrap()
                    };
                    let fd = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
                    let exact = h * lu.values()[i];
                    worst = worst.max((fd - exact).abs() / exact.abs());
                }
            }
        }
    }
    Outcome::gate(worst <= 1e-5, format!("max relative error {worst:.2e} over 900 coordinates (tol 1e-5)"))
}

/// `tau J(u) + (h/2) |u - f|^2` on three cells of (0, 1), written out independently.
fn three_cell_objective(u: &[f64; 3], f: &[f64; 3], tau: f64, p: f64, s: f64) -> f64 {
    let h = 1.0 / 3.0;
    let sp = s * p;
    let x = |i: usize| (i as f64 + 0.5) * h;
    let cell = |xi: f64, a: f64, b: f64| {
        let (near, far) = if xi <= a { (a - xi, b - xi) } else { (xi - b, xi - a) };
        (near.powf(-sp) - far.powf(-sp)) / sp
    };
    let mut pair = 0.0;
    let mut tail = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                let w = cell(x(i), j as f64 * h, (j + 1) as f64 * h);
                pair += (u[i] - u[j]).abs().powf(p) * w * h;
            }
        }
        let t = (x(i).powf(-sp) + (1.0 - x(i)).powf(-sp)) / sp;
        tail += 2.0 * u[i].abs().powf(p) * t * h;
    }
    let fit: f64 = (0..3).map(|i| (u[i] - f[i]).powi(2)).sum::<f64>() * h / 2.0;
    tau * (pair + tail) / p + fit
}

/// Nested grid search: 21 points per axis, box shrunk around the best point until the
/// spacing is below 1e-4.
fn brute_force(f: &[f64; 3], tau: f64) -> [f64; 3] {
    let lo = f.iter().copied().fold(0.0f64, f64::min);
    let hi = f.iter().copied().fold(0.0f64, f64::max);
    let mut center = [(lo + hi) / 2.0; 3];
    let mut half = (hi - lo) / 2.0 + 1e-3;
    while half / 10.0 > 1e-5 {
        let step = half / 10.0;
        let mut best = (f64::INFINITY, center);
        for a in -10..=10 {
            for b in -10..=10 {
                for c in -10..=10 {
                    let u = [
                        center[0] + a as f64 * step,
                        center[1] + b as f64 * step,
                        center[2] + c as f64 * step,
                    ];
                    let g = three_cell_objective(&u, f, tau, 3.0, 0.5);
                    if g < best.0 {
                        best = (g, u);
                    }
                }
            }
        }
        center = best.1;
        half = 2.0 * step;
    }
    center
}

// 2
fn prox_oracle() -> Outcome {
    let g = make_grid(0.0, 1.0, 3).unwrap();
    let kw = build_weights(&g, &Params::new(3.0, 0.5).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut cases = vec![([0.0, 1.0, 0.0], 0.1)];
    for _ in 0..4 {
        let f = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        cases.push((f, rng.random_range(0.01..1.0)));
    }
    let mut worst = 0.0f64;
    for (f, tau) in &cases {
        let (u, _) = prox_step(&Field::from_values(&g, f.to_vec()).unwrap(), *tau, &kw, 1e-12, 100).unwrap();
        let oracle = brute_force(f, *tau);
        for i in 0..3 {
            worst = worst.max((u.values()[i] - oracle[i]).abs());
        }
    }
    Outcome::gate(worst <= 1e-3, format!("max coordinate gap to grid-search minimizer {worst:.2e} over 5 instances (tol 1e-3)"))
}

// 3
fn decay_exponent() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for p in [3.0, 4.0] {
        let start = Instant::now();
        let traj = if p == 3.0 {
            bump_run3().clone()
        } else {
            let kw = unit_weights(p, 0.5);
            run(&bump(kw.grid()), &long_schedule(), &kw)
        };
        let slope = fit_decay_exponent(&traj, Norm::LInf, (1.0, T_END)).unwrap();
        let target = -1.0 / (p - 2.0);
        let rel = (slope - target).abs() / target.abs();
        ok &= rel <= 0.05;
        parts.push(format!("p={p}: slope {slope:.4} vs {target:.4} (rel {rel:.3}, {:.0?})", start.elapsed()));
    }
    Outcome::gate(ok, parts.join("; "))
}

// 4
fn universal_bound() -> Outcome {
    let kw = kw3();
    let gp = giant3();
    let g = kw.grid();
    let data = [
        ("bump", bump(g)),
        ("indicator", InitialData::Indicator { center: 0.5, half_width: 0.25, amplitude: 1.0 }.sample(g).unwrap()),
        ("100F", gp.profile.scaled(100.0)),
    ];
    let results: Vec<(String, bool)> = data
        .par_iter()
        .map(|(name, u0)| {
            let traj = if *name == "bump" { bump_run3().clone() } else { run(u0, &long_schedule(), kw) };
            let r = check_universal_bound(&traj, gp, 0.02).unwrap();
            (format!("{name}: max ratio {:.4}", r.measured[0]), r.passed)
        })
        .collect();
    let ok = results.iter().all(|r| r.1);
    Outcome::gate(ok, format!("{} (slack 2%)", results.iter().map(|r| r.0.as_str()).collect::<Vec<_>>().join(", ")))
}

// 5
fn convergence_to_profile() -> Outcome {
    let r = check_convergence_to_profile(bump_run3(), giant3(), 0.05).unwrap();
    Outcome::gate(r.passed, r.detail)
}

// 6
fn profile_cross_validation() -> Outcome {
    let e = profile_distance(bump_run3(), giant3()).unwrap();
    let (t, last) = e[e.len() - 1];
    Outcome::gate(last <= 0.02, format!("|t u(t) - F|_inf / |F|_inf = {last:.4e} at t = {t:.0} (tol 2%)"))
}

// 7
fn profile_scaling() -> Outcome {
    let prm = Params::new(3.0, 0.5).unwrap();
    let g1 = make_grid(0.0, 1.0, N).unwrap();
    let g2 = scale_grid(&g1, 2.0).unwrap();
    let (f1, f2) = rayon::join(
        || giant3().clone(),
        || compute_giant(&build_weights(&g2, &prm), PROFILE_TOL, 20_000).unwrap(),
    );
    let target = 2f64.powf(1.5);
    let worst = f2
        .profile
        .values()
        .iter()
        .zip(f1.profile.values())
        .map(|(a, b)| (a / b - target).abs() / target)
        .fold(0.0, f64::max);
    Outcome::gate(worst <= 0.02, format!("max relative deviation of F_(0,2)(2x) / F_(0,1)(x) from 2^1.5: {worst:.2e} (tol 2%)"))
}

// 8 and 9 share the eigenpairs
fn eigenpairs() -> &'static (fracplap::EigenPair, fracplap::EigenPair) {
    static EP: OnceLock<(fracplap::EigenPair, fracplap::EigenPair)> = OnceLock::new();
    EP.get_or_init(|| {
        let kw = kw3();
        let kw2 = build_weights(&scale_grid(kw.grid(), 2.0).unwrap(), kw.params());
        rayon::join(
            || compute_eigenpair(kw, 1e-8, 1000).unwrap(),
            || compute_eigenpair(&kw2, 1e-8, 1000).unwrap(),
        )
    })
}

fn eigen_scaling() -> Outcome {
    let (e1, e2) = eigenpairs();
    let ratio = e2.lambda1 / e1.lambda1;
    let target = 2f64.powf(-1.5);
    let rel = (ratio - target).abs() / target;
    Outcome::gate(
        rel <= 0.01 && e2.lambda1 < e1.lambda1,
        format!("lambda1(0,1) = {:.6}, lambda1(0,2) = {:.6}, ratio {ratio:.6} vs 2^-1.5 (rel {rel:.2e}, tol 1%)", e1.lambda1, e2.lambda1),
    )
}

fn eigen_residual() -> Outcome {
    let (e1, _) = eigenpairs();
    let scale = e1.lambda1 * e1.phi1.norm(Norm::LInf).powi(2);
    let rel = e1.residual / scale;
    Outcome::gate(rel <= 1e-6, format!("|L phi - lambda Phi(phi)|_inf / (lambda |Phi(phi)|_inf) = {rel:.2e} after {} iterations (tol 1e-6)", e1.iterations))
}

// 10
fn mass_loss() -> Outcome {
    let r = check_mass_loss(bump_run3(), 1e-6);
    Outcome::gate(r.passed, r.detail)
}

// 11
fn contraction() -> Outcome {
    let kw = kw3();
    let g = kw.grid();
    let sched = TimeSchedule::Geometric { t0: T0, t_end: 10.0, ratio: 1.05 };
    let a = InitialData::Bump { center: 0.4, half_width: 0.3, amplitude: 1.0 }.sample(g).unwrap();
    let b = InitialData::Indicator { center: 0.6, half_width: 0.2, amplitude: 0.8 }.sample(g).unwrap();
    let (ta, tb) = rayon::join(|| run(&a, &sched, kw), || run(&b, &sched, kw));
    let r = check_contraction(&ta, &tb, 1e-8).unwrap();
    Outcome::gate(r.passed, r.detail)
}

// 12
fn time_monotonicity() -> Outcome {
    let traj = bump_run3();
    let r = check_time_monotonicity(traj, &Params::new(3.0, 0.5).unwrap(), traj.time(0), 1e-3).unwrap();
    Outcome::gate(r.passed, r.detail)
}

// 13
fn positivity() -> Outcome {
    let kw = kw3();
    let g = kw.grid();
    let u0 = InitialData::Cell { index: 0, amplitude: 1.0 }.sample(g).unwrap();
    let sched = TimeSchedule::Geometric { t0: T0, t_end: 10.0, ratio: 1.05 };
    let traj = run(&u0, &sched, kw);
    let first = check_positivity_with_margin(&traj, traj.time(1), 0.0);
    let interior = check_positivity(&traj, traj.time(1));
    let first_step_min = traj.state(1).min();
    Outcome::gate(
        first_step_min > 0.0 && first.passed && interior.passed,
        format!("after one step min u = {first_step_min:.3e}; {}; {}", first.detail, interior.detail),
    )
}

// 14
fn reflection() -> Outcome {
    let g = make_grid(-1.0, 1.0, N).unwrap();
    let kw = build_weights(&g, &Params::new(3.0, 0.5).unwrap());
    let scenarios = [
        ("symmetric", Field::from_fn(&g, |x| (1.0 - x * x) * (1.0 + (6.0 * x).cos().powi(2))).unwrap()),
        ("right half", Field::from_fn(&g, |x| if x > 0.1 && x < 0.8 { 1.0 + x } else { 0.0 }).unwrap()),
        ("radially decreasing", Field::from_fn(&g, |x| (-4.0 * x * x).exp()).unwrap()),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, f) in &scenarios {
        let r = check_reflection(f, 0.05, &kw, 1e-12).unwrap();
        ok &= r.passed;
        parts.push(format!("{name}: {}", r.detail));
    }
    Outcome::gate(ok, parts.join("; "))
}

// 15
fn extinction() -> Outcome {
    let prm = Params::new(1.5, 0.5).unwrap();
    let kw = unit_weights(1.5, 0.5);
    let sched = TimeSchedule::Uniform { t0: 0.0, t_end: 0.5, n_steps: 5000 };
    let opts = EvolveOptions { stop_below: Some(1e-9), ..Default::default() };
    let traj = evolve(&bump(kw.grid()), &sched, &kw, &opts).unwrap();
    let r = check_extinction(&traj, &prm, 1e-8).unwrap();
    Outcome::gate(r.passed, r.detail)
}

// 16
fn sandwich() -> Outcome {
    let kw = kw3();
    let gp = giant3();
    let sched = TimeSchedule::Uniform { t0: 0.0, t_end: 60.0, n_steps: 3000 };
    let exact = gp.profile.scaled(1.0 / 5.0);
    let (family, bumped) = rayon::join(|| run(&exact, &sched, kw), || bump_run3().clone());
    let r1 = check_sharp_sandwich(&family, gp).unwrap();
    let r2 = check_sharp_sandwich(&bumped, gp).unwrap();
    let delay = r1.measured[0];
    let ok = (delay - 5.0).abs() <= 0.25 && r2.measured[0].is_finite();
    Outcome {
        passed: ok,
        gating: false,
        detail: format!("U(t+5) data: T = {delay:.4}; bump data: {}", r2.detail),
    }
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("gradient identity", gradient_identity),
        ("prox oracle", prox_oracle),
        ("decay exponent", decay_exponent),
        ("universal bound", universal_bound),
        ("convergence to profile", convergence_to_profile),
        ("profile cross-validation", profile_cross_validation),
        ("profile scaling law", profile_scaling),
        ("eigenvalue scaling", eigen_scaling),
        ("eigen residual", eigen_residual),
        ("mass-loss identity", mass_loss),
        ("contraction", contraction),
        ("time monotonicity", time_monotonicity),
        ("positivity", positivity),
        ("reflection", reflection),
        ("extinction", extinction),
        ("sandwich (exploratory)", sandwich),
    ];
    let start = Instant::now();
    let outcomes: Vec<(Outcome, f64)> = criteria
        .par_iter()
        .map(|(_, f)| {
            let t = Instant::now();
            let o = f();
            (o, t.elapsed().as_secs_f64())
        })
        .collect();
    let mut gating_failures = 0;
    for (k, ((name, _), (o, secs))) in criteria.iter().zip(&outcomes).enumerate() {
        let tag = match (o.passed, o.gating) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (exploratory, not gating)",
        };
        if !o.passed && o.gating {
            gating_failures += 1;
        }
        println!("criterion {:>2} {name:<26} {tag}  [{secs:.1}s] {}", k + 1, o.detail);
    }
    println!("acceptance: {} criteria, {gating_failures} gating failures, {:.1}s", criteria.len(), start.elapsed().as_secs_f64());
    if gating_failures > 0 {
        std::process::exit(1);
    }
}
