//! Time stepping by chained implicit steps, plus the two self-similar rescalings.

use serde::{Deserialize, Serialize};

use crate::domain::{Grid, Params};
use crate::error::{Error, Result};
use crate::field::{Field, Norm};
use crate::kernel::{tail_mass_coefficient, KernelWeights};
use crate::prox::{prox_step_from, ProxReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TimeSchedule {
    Uniform { t0: f64, t_end: f64, n_steps: usize },
    /// `t_{k+1} = ratio * t_k`, last step clipped to `t_end`.
    Geometric { t0: f64, t_end: f64, ratio: f64 },
}

impl TimeSchedule {
    pub fn t0(&self) -> f64 {
        match *self {
            TimeSchedule::Uniform { t0, .. } | TimeSchedule::Geometric { t0, .. } => t0,
        }
    }

    pub fn t_end(&self) -> f64 {
        match *self {
            TimeSchedule::Uniform { t_end, .. } | TimeSchedule::Geometric { t_end, .. } => t_end,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (t0, t_end) = (self.t0(), self.t_end());
        if !t0.is_finite() || !t_end.is_finite() || t0 < 0.0 || t_end <= t0 {
            return Err(Error::param(format!(
                "schedule needs 0 <= t0 < t_end, got t0 = {t0}, t_end = {t_end}"
            )));
        }
        match *self {
            TimeSchedule::Uniform { n_steps: 0, .. } => {
                Err(Error::param("uniform schedule needs at least one step"))
            }
            TimeSchedule::Geometric { t0, .. } if t0 <= 0.0 => {
                Err(Error::param("geometric schedule needs t0 > 0"))
            }
            TimeSchedule::Geometric { ratio, .. } if !ratio.is_finite() || ratio <= 1.0 => {
                Err(Error::param(format!("geometric ratio must exceed 1, got {ratio}")))
            }
            _ => Ok(()),
        }
    }

    /// All time levels, starting with `t0` and ending with `t_end`.
    pub fn times(&self) -> Result<Vec<f64>> {
        self.validate()?;
        Ok(match *self {
            TimeSchedule::Uniform { t0, t_end, n_steps } => {
                let dt = (t_end - t0) / n_steps as f64;
                let mut t: Vec<f64> = (0..n_steps).map(|k| t0 + k as f64 * dt).collect();
                t.push(t_end);
                t
            }
            TimeSchedule::Geometric { t0, t_end, ratio } => {
                let mut t = vec![t0];
                let mut cur = t0;
                while cur * ratio < t_end {
                    cur *= ratio;
                    t.push(cur);
                }
                // absorb a sliver of a last step into the previous one
                let last = *t.last().unwrap();
                if t.len() > 1 && t_end - last < 0.5 * last * (ratio - 1.0) {
                    t.pop();
                }
                t.push(t_end);
                t
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub time: f64,
    /// Step that produced this state; zero for the initial state.
    pub dt: f64,
    pub mass: f64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    /// `2 sum Phi(u_i) T_i h` at this state, when kernel weights were available.
    pub mass_loss_rate: Option<f64>,
    pub prox: Option<ProxReport>,
}

impl StepRecord {
    fn measure(u: &Field, time: f64, dt: f64, kw: Option<&KernelWeights>, prox: Option<ProxReport>) -> Self {
        Self {
            time,
            dt,
            mass: u.mass(),
            l1: u.norm(Norm::L1),
            l2: u.norm(Norm::L2),
            linf: u.norm(Norm::LInf),
            mass_loss_rate: kw.and_then(|kw| tail_mass_coefficient(kw, u).ok()),
            prox,
        }
    }
}

/// A time-stamped sequence of states on one grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: Grid,
    times: Vec<f64>,
    states: Vec<Field>,
    records: Vec<StepRecord>,
}

impl Trajectory {
    /// Builds a trajectory from precomputed states (synthetic families, reloaded runs).
    pub fn from_states(grid: &Grid, times: Vec<f64>, states: Vec<Field>) -> Result<Self> {
        if times.is_empty() || times.len() != states.len() {
            return Err(Error::param("a trajectory needs one state per time level"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::param("trajectory times must be finite and strictly increasing"));
        }
        if states.iter().any(|s| s.grid_id() != grid.id()) {
            return Err(Error::GridMismatch);
        }
        let records = times
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                let dt = if k == 0 { 0.0 } else { t - times[k - 1] };
                StepRecord::measure(&states[k], t, dt, None, None)
            })
            .collect();
        Ok(Self {
            grid: grid.clone(),
            times,
            states,
            records,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Field] {
        &self.states
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn state(&self, k: usize) -> &Field {
        &self.states[k]
    }

    pub fn last_state(&self) -> &Field {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn norms(&self, q: Norm) -> Vec<f64> {
        self.states.iter().map(|s| s.norm(q)).collect()
    }

    fn map_states(&self, f: impl Fn(f64, &Field) -> (f64, Field)) -> Result<Trajectory> {
        let (times, states): (Vec<f64>, Vec<Field>) =
            self.times.iter().zip(&self.states).map(|(&t, u)| f(t, u)).unzip();
        Trajectory::from_states(&self.grid, times, states)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    /// Relative gradient tolerance of every implicit step.
    pub tol: f64,
    pub max_iter: usize,
    /// Stop early once `|u|_inf` drops to this level.
    pub stop_below: Option<f64>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 100,
            stop_below: None,
        }
    }
}

/// Backward Euler: `u_{k+1} + dt_k L u_{k+1} = u_k`, each step warm-started from `u_k`.
pub fn evolve(u0: &Field, sched: &TimeSchedule, kw: &KernelWeights, opts: &EvolveOptions) -> Result<Trajectory> {
    kw.check(u0)?;
    let times = sched.times()?;
    let mut traj = Trajectory {
        grid: kw.grid().clone(),
        times: vec![times[0]],
        states: vec![u0.clone()],
        records: vec![StepRecord::measure(u0, times[0], 0.0, Some(kw), None)],
    };

    for (k, w) in times.windows(2).enumerate() {
        let dt = w[1] - w[0];
        let prev = traj.last_state();
        let step = prox_step_from(prev, dt, kw, prev, opts.tol, opts.max_iter);
        let (next, report) = match step {
            Ok(ok) => ok,
            Err(err) => {
                return Err(Error::StepFailed {
                    step: k + 1,
                    partial: Box::new(traj),
                    source: Box::new(err),
                })
            }
        };
        if next.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::StepFailed {
                step: k + 1,
                partial: Box::new(traj),
                source: Box::new(Error::NonFinite("state after implicit step".into())),
            });
        }
        let record = StepRecord::measure(&next, w[1], dt, Some(kw), Some(report));
        let linf = record.linf;
        traj.times.push(w[1]);
        traj.states.push(next);
        traj.records.push(record);
        if opts.stop_below.is_some_and(|level| linf <= level) {
            break;
        }
    }
    Ok(traj)
}

/// `v = (a + t)^(1/(p-2)) u`, `tau = log(a + t) / (p - 2)`.
pub fn to_rescaled(traj: &Trajectory, a: f64, prm: &Params) -> Result<Trajectory> {
    let mu = prm.mu()?;
    if traj.times.iter().any(|&t| a + t <= 0.0) {
        return Err(Error::param("rescaling needs a + t > 0 at every time level"));
    }
    traj.map_states(|t, u| (mu * (a + t).ln(), u.scaled((a + t).powf(mu))))
}

/// Inverse of [`to_rescaled`].
pub fn from_rescaled(traj: &Trajectory, a: f64, prm: &Params) -> Result<Trajectory> {
    let mu = prm.mu()?;
    traj.map_states(|tau, v| {
        let shifted = (tau / mu).exp();
        (shifted - a, v.scaled(shifted.powf(-mu)))
    })
}

/// `v = (T - t)^(-1/(2-p)) u`, `tau = log(1 / (T - t)) / (2 - p)`, for 1 < p < 2.
pub fn to_extinction_rescaled(traj: &Trajectory, big_t: f64, prm: &Params) -> Result<Trajectory> {
    prm.require_fast()?;
    if traj.times.iter().any(|&t| t >= big_t) {
        return Err(Error::param(format!(
            "extinction rescaling needs every time level below T = {big_t}"
        )));
    }
    let nu = 1.0 / (2.0 - prm.p());
    traj.map_states(|t, u| (-nu * (big_t - t).ln(), u.scaled((big_t - t).powf(-nu))))
}

/// Inverse of [`to_extinction_rescaled`].
pub fn from_extinction_rescaled(traj: &Trajectory, big_t: f64, prm: &Params) -> Result<Trajectory> {
    prm.require_fast()?;
    let nu = 1.0 / (2.0 - prm.p());
    traj.map_states(|tau, v| {
        let remaining = (-tau / nu).exp();
        (big_t - remaining, v.scaled(remaining.powf(nu)))
    })
}

/// Backward difference `(u_k - u_{k-1}) / (t_k - t_{k-1})`.
pub fn step_time_derivative(traj: &Trajectory, k: usize) -> Result<Field> {
    if k == 0 || k >= traj.len() {
        return Err(Error::param(format!(
            "time derivative index {k} outside 1..{}",
            traj.len()
        )));
    }
    let dt = traj.times[k] - traj.times[k - 1];
    traj.states[k].zip_with(&traj.states[k - 1], |a, b| (a - b) / dt)
}

/// Initial-data presets; all nonnegative for nonnegative amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    Zero,
    /// `A exp(1 - 1/(1 - r^2))` for `|r| < 1`, `r = (x - center) / half_width`.
    Bump { center: f64, half_width: f64, amplitude: f64 },
    Indicator { center: f64, half_width: f64, amplitude: f64 },
    Constant { amplitude: f64 },
    /// A single nonzero cell.
    Cell { index: usize, amplitude: f64 },
    /// A multiple of a precomputed field (eigenfunction, profile).
    Scaled { base: Field, amplitude: f64 },
}

impl InitialData {
    pub fn sample(&self, grid: &Grid) -> Result<Field> {
        match self {
            InitialData::Zero => Ok(Field::zeros(grid)),
            &InitialData::Bump { center, half_width, amplitude } => {
                positive_width(half_width)?;
                Field::from_fn(grid, |x| {
                    let r = (x - center) / half_width;
                    if r.abs() < 1.0 {
                        amplitude * (1.0 - 1.0 / (1.0 - r * r)).exp()
                    } else {
                        0.0
                    }
                })
            }
            &InitialData::Indicator { center, half_width, amplitude } => {
                positive_width(half_width)?;
                Field::from_fn(grid, |x| if (x - center).abs() <= half_width { amplitude } else { 0.0 })
            }
            &InitialData::Constant { amplitude } => Field::from_fn(grid, |_| amplitude),
            &InitialData::Cell { index, amplitude } => {
                if index >= grid.n_cells() {
                    return Err(Error::param(format!("cell index {index} outside the grid")));
                }
                let mut v = vec![0.0; grid.n_cells()];
                v[index] = amplitude;
                Field::from_values(grid, v)
            }
            InitialData::Scaled { base, amplitude } => {
                if base.grid_id() != grid.id() {
                    return Err(Error::GridMismatch);
                }
                Ok(base.scaled(*amplitude))
            }
        }
    }
}

fn positive_width(w: f64) -> Result<()> {
    if w > 0.0 && w.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("half width must be positive, got {w}")))
    }
}
