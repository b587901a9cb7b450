//! Flat `key = value` run configuration.
//!
//! Every key has a default, so an empty document is a valid configuration. Values
//! set later (another line, a command-line override) replace earlier ones. Errors
//! name the line or flag that supplied the offending value.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{make_grid, Grid, Params};
use crate::error::{Error, Result};
use crate::evolution::{InitialData, TimeSchedule};
use crate::field::Field;
use crate::kernel::KernelWeights;
use crate::profiles::{compute_eigenpair, compute_giant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Uniform,
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialKind {
    Zero,
    Bump,
    Indicator,
    Constant,
    Cell,
    Eigenfunction,
    Giant,
}

/// Which range of `p` a command needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Any,
    /// `p > 2`
    Slow,
    /// `1 < p < 2`
    Fast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub p: f64,
    pub s: f64,
    pub x_left: f64,
    pub x_right: f64,
    pub n_cells: usize,
    pub schedule: ScheduleKind,
    pub t0: f64,
    pub t_end: f64,
    pub ratio: f64,
    pub n_steps: usize,
    pub initial: InitialKind,
    /// Defaults to the midpoint of the domain.
    pub center: Option<f64>,
    /// Defaults to 0.3 times the domain length.
    pub half_width: Option<f64>,
    pub amplitude: f64,
    pub cell: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub profile_tol: f64,
    pub profile_max_steps: usize,
    pub eigen_tol: f64,
    pub eigen_max_iter: usize,
    pub bound_slack: f64,
    pub convergence_tol: f64,
    pub extinction_threshold: f64,
    pub snapshots: usize,
    pub out: PathBuf,
    pub seed: u64,
    #[serde(skip)]
    origins: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            p: 3.0,
            s: 0.5,
            x_left: 0.0,
            x_right: 1.0,
            n_cells: 200,
            schedule: ScheduleKind::Geometric,
            t0: 1e-3,
            t_end: 1e3,
            ratio: 1.005,
            n_steps: 1000,
            initial: InitialKind::Bump,
            center: None,
            half_width: None,
            amplitude: 1.0,
            cell: 0,
            tol: 1e-12,
            max_iter: 100,
            profile_tol: 1e-10,
            profile_max_steps: 20_000,
            eigen_tol: 1e-8,
            eigen_max_iter: 1000,
            bound_slack: 0.02,
            convergence_tol: 0.05,
            extinction_threshold: 1e-8,
            snapshots: 11,
            out: PathBuf::from("out"),
            seed: 0,
            origins: BTreeMap::new(),
        }
    }
}

/// Key, meaning. Defaults are taken from `RunConfig::default()`.
const KEYS: &[(&str, &str)] = &[
    ("p", "exponent of the nonlinearity, p > 1"),
    ("s", "fractional order, 0 < s < 1"),
    ("x_left", "left endpoint of the interval"),
    ("x_right", "right endpoint of the interval"),
    ("n_cells", "number of grid cells, at least 3"),
    ("schedule", "time schedule: uniform | geometric"),
    ("t0", "initial time"),
    ("t_end", "final time"),
    ("ratio", "growth factor of a geometric schedule"),
    ("n_steps", "number of steps of a uniform schedule"),
    ("initial", "initial data: zero | bump | indicator | constant | cell | eigenfunction | giant"),
    ("center", "center of bump or indicator data (default: midpoint)"),
    ("half_width", "half width of bump or indicator data (default: 0.3 x length)"),
    ("amplitude", "multiplier of the initial data"),
    ("cell", "index of the nonzero cell for initial = cell"),
    ("tol", "relative tolerance of every implicit step"),
    ("max_iter", "iteration budget of every implicit step"),
    ("profile_tol", "residual tolerance of the separable profile"),
    ("profile_max_steps", "step budget of the profile march"),
    ("eigen_tol", "residual tolerance of the eigenpair"),
    ("eigen_max_iter", "iteration budget of the eigenpair"),
    ("bound_slack", "relative slack of the universal upper bound"),
    ("convergence_tol", "tolerance on the distance to the profile at t_end"),
    ("extinction_threshold", "sup-norm level that counts as extinct"),
    ("snapshots", "number of state snapshots written by run"),
    ("out", "output directory"),
    ("seed", "seed of the randomized checks"),
];

fn parse_value<T: FromStr>(value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse {value:?}"))
}

fn parse_kind<T: for<'de> Deserialize<'de>>(value: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(value.to_string())).map_err(|_| format!("unknown choice {value:?}"))
}

/// Parses a document and validates it for `Regime::Any`.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let origin = format!("line {}", k + 1);
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config { origin, msg: format!("expected `key = value`, got {line:?}") });
        };
        cfg.set(key.trim(), value.trim(), &origin)?;
    }
    cfg.validate(Regime::Any)?;
    Ok(cfg)
}

impl RunConfig {
    /// Sets one key; `origin` is recorded for later error messages.
    pub fn set(&mut self, key: &str, value: &str, origin: &str) -> Result<()> {
        self.assign(key, value).map_err(|msg| Error::Config { origin: origin.to_string(), msg })?;
        self.origins.insert(key.to_string(), origin.to_string());
        Ok(())
    }

    fn assign(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value;
        match key {
            "p" => self.p = parse_value(v)?,
            "s" => self.s = parse_value(v)?,
            "x_left" => self.x_left = parse_value(v)?,
            "x_right" => self.x_right = parse_value(v)?,
            "n_cells" => self.n_cells = parse_value(v)?,
            "schedule" => self.schedule = parse_kind(v)?,
            "t0" => self.t0 = parse_value(v)?,
            "t_end" => self.t_end = parse_value(v)?,
            "ratio" => self.ratio = parse_value(v)?,
            "n_steps" => self.n_steps = parse_value(v)?,
            "initial" => self.initial = parse_kind(v)?,
            "center" => self.center = Some(parse_value(v)?),
            "half_width" => self.half_width = Some(parse_value(v)?),
            "amplitude" => self.amplitude = parse_value(v)?,
            "cell" => self.cell = parse_value(v)?,
            "tol" => self.tol = parse_value(v)?,
            "max_iter" => self.max_iter = parse_value(v)?,
            "profile_tol" => self.profile_tol = parse_value(v)?,
            "profile_max_steps" => self.profile_max_steps = parse_value(v)?,
            "eigen_tol" => self.eigen_tol = parse_value(v)?,
            "eigen_max_iter" => self.eigen_max_iter = parse_value(v)?,
            "bound_slack" => self.bound_slack = parse_value(v)?,
            "convergence_tol" => self.convergence_tol = parse_value(v)?,
            "extinction_threshold" => self.extinction_threshold = parse_value(v)?,
            "snapshots" => self.snapshots = parse_value(v)?,
            "out" if !v.is_empty() => self.out = PathBuf::from(v),
            "out" => return Err("empty output directory".into()),
            "seed" => self.seed = parse_value(v)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    fn origin(&self, key: &str) -> String {
        self.origins.get(key).cloned().unwrap_or_else(|| format!("default of {key}"))
    }

    fn fail(&self, key: &str, msg: impl Into<String>) -> Error {
        Error::Config { origin: self.origin(key), msg: msg.into() }
    }

    /// Checks every module precondition, blaming the key that broke it.
    pub fn validate(&self, regime: Regime) -> Result<()> {
        let prm = Params::new(self.p, self.s).map_err(|e| {
            let key = if self.p.is_finite() && self.p > 1.0 { "s" } else { "p" };
            self.fail(key, e.to_string())
        })?;
        match regime {
            Regime::Slow => prm.require_slow().map_err(|e| self.fail("p", e.to_string()))?,
            Regime::Fast => prm.require_fast().map_err(|e| self.fail("p", e.to_string()))?,
            Regime::Any => {}
        }
        make_grid(self.x_left, self.x_right, self.n_cells).map_err(|e| {
            let key = if self.n_cells < 3 { "n_cells" } else { "x_right" };
            self.fail(key, e.to_string())
        })?;
        self.schedule().validate().map_err(|e| {
            let key = match self.schedule {
                ScheduleKind::Geometric if !(self.ratio > 1.0) => "ratio",
                ScheduleKind::Uniform if self.n_steps == 0 => "n_steps",
                _ if self.t_end <= self.t0 => "t_end",
                _ => "t0",
            };
            self.fail(key, e.to_string())
        })?;
        let positive = [
            ("tol", self.tol),
            ("profile_tol", self.profile_tol),
            ("eigen_tol", self.eigen_tol),
            ("extinction_threshold", self.extinction_threshold),
            ("convergence_tol", self.convergence_tol),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(self.fail(key, format!("{key} must be positive, got {v}")));
            }
        }
        if !(self.bound_slack >= 0.0 && self.bound_slack.is_finite()) {
            return Err(self.fail("bound_slack", format!("bound_slack must be nonnegative, got {}", self.bound_slack)));
        }
        for (key, v) in [("max_iter", self.max_iter), ("profile_max_steps", self.profile_max_steps), ("eigen_max_iter", self.eigen_max_iter)] {
            if v == 0 {
                return Err(self.fail(key, format!("{key} must be at least 1")));
            }
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(self.fail("amplitude", format!("amplitude must be nonnegative, got {}", self.amplitude)));
        }
        if let Some(w) = self.half_width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(self.fail("half_width", format!("half_width must be positive, got {w}")));
            }
        }
        if self.center.is_some_and(|c| !c.is_finite()) {
            return Err(self.fail("center", "center must be finite"));
        }
        if self.initial == InitialKind::Cell && self.cell >= self.n_cells {
            return Err(self.fail("cell", format!("cell {} outside 0..{}", self.cell, self.n_cells)));
        }
        if self.initial == InitialKind::Giant && regime != Regime::Slow {
            prm.require_slow().map_err(|e| self.fail("initial", format!("giant initial data: {e}")))?;
        }
        Ok(())
    }

    pub fn params(&self) -> Result<Params> {
        Params::new(self.p, self.s)
    }

    pub fn grid(&self) -> Result<Grid> {
        make_grid(self.x_left, self.x_right, self.n_cells)
    }

    pub fn schedule(&self) -> TimeSchedule {
        match self.schedule {
            ScheduleKind::Uniform => TimeSchedule::Uniform { t0: self.t0, t_end: self.t_end, n_steps: self.n_steps },
            ScheduleKind::Geometric => TimeSchedule::Geometric { t0: self.t0, t_end: self.t_end, ratio: self.ratio },
        }
    }

    fn center(&self) -> f64 {
        self.center.unwrap_or(0.5 * (self.x_left + self.x_right))
    }

    fn half_width(&self) -> f64 {
        self.half_width.unwrap_or(0.3 * (self.x_right - self.x_left))
    }

    /// Samples the configured initial data; the eigenfunction is scaled to unit sup
    /// norm, the profile is used as computed.
    pub fn initial_data(&self, kw: &KernelWeights) -> Result<Field> {
        let (center, half_width, amplitude) = (self.center(), self.half_width(), self.amplitude);
        let data = match self.initial {
            InitialKind::Zero => InitialData::Zero,
            InitialKind::Bump => InitialData::Bump { center, half_width, amplitude },
            InitialKind::Indicator => InitialData::Indicator { center, half_width, amplitude },
            InitialKind::Constant => InitialData::Constant { amplitude },
            InitialKind::Cell => InitialData::Cell { index: self.cell, amplitude },
            InitialKind::Eigenfunction => {
                let ep = compute_eigenpair(kw, self.eigen_tol, self.eigen_max_iter)?;
                let top = ep.phi1.max();
                InitialData::Scaled { base: ep.phi1, amplitude: amplitude / top }
            }
            InitialKind::Giant => {
                let gp = compute_giant(kw, self.profile_tol, self.profile_max_steps)?;
                InitialData::Scaled { base: gp.profile, amplitude }
            }
        };
        data.sample(kw.grid())
    }
}

/// Key reference with defaults, for `--help`.
pub fn config_help() -> String {
    let defaults = serde_json::to_value(RunConfig::default()).unwrap_or_default();
    let mut out = String::from("Configuration keys (`key = value`, `#` starts a comment):\n");
    for (key, about) in KEYS {
        let default = match &defaults[*key] {
            serde_json::Value::Null => "auto".to_string(),
            serde_json::Value::String(s) => s.clone(),
            v => v.to_string(),
        };
        let _ = writeln!(out, "  {key:<21} {about} [default: {default}]");
    }
    out
}
