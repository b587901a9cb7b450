//! Numerical laboratory for the Dirichlet problem of the fractional p-Laplacian
//! on a bounded interval: implicit time stepping, self-similar profiles, the first
//! eigenpair, and checks of the qualitative properties of the flow.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod domain;
pub mod error;
pub mod evolution;
pub mod field;
pub mod io;
pub mod kernel;
pub mod operator;
pub mod profiles;
pub mod prox;
pub mod suite;

pub use config::{parse_config, Regime, RunConfig};
pub use domain::{make_grid, scale_grid, Grid, GridId, Params};
pub use error::{Error, Result};
pub use evolution::{evolve, EvolveOptions, InitialData, StepRecord, TimeSchedule, Trajectory};
pub use field::{Field, Norm};
pub use kernel::{build_weights, tail_mass_coefficient, KernelWeights};
pub use operator::{apply_operator, energy, phi, rayleigh_quotient, weak_form};
pub use prox::{prox_residual, prox_step, prox_step_from, ProxReport};
pub use profiles::{compute_eigenpair, compute_giant, normalize_profile, EigenPair, GiantProfile};
pub use diagnostics::{CheckResult, Verdict};
