//! Stochastic SIR epidemic model driven by Brownian motion and compensated
//! Poisson jumps.
//!
//! The crate computes the deterministic and stochastic thresholds in closed
//! form, integrates the jump-diffusion system with a log-space scheme that
//! keeps every compartment strictly positive, and turns path ensembles into
//! empirical verdicts (time-average laws, moment bounds, extinction slopes,
//! stationarity of the infected class).

pub mod commands;
pub mod config;
pub mod diagnostics;
pub mod engine;
pub mod ensemble;
pub mod levy;
pub mod model;
pub mod output;
pub mod threshold;
pub mod verify;

pub use engine::{simulate_path, simulate_path_indexed, SimConfig, SimError, TrajectoryRecord};
pub use levy::{Atom, FiniteLevyMeasure, JumpBatch, LevyError};
pub use model::{
    check_assumptions, compute_moment_constants, validate_params, Component, ModelError,
    ModelParams, MomentConstants, NoiseSpec, StateTriple,
};
pub use threshold::{classify, compute_r0, compute_t0s, Regime, ThresholdReport};
