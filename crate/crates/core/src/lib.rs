//! Ensemble Kalman-type filters for SDE-driven state and parameter
//! estimation: the additive-gain EnKS, its iterated variant, and a
//! perturbed-observation EnKF for comparison, together with the model
//! plumbing they share and the benchmark problems used to evaluate them.
//!
//! With the default `parallel` feature, particle propagation and observation
//! run on rayon; every particle draws from its own counter-based stream, so
//! results are bit-identical under [`Execution::Sequential`].

// `!(x > 0.0)` is used throughout because it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod enkf;
pub mod enks;
mod error;
mod exec;
pub mod iterative;
pub mod linalg;
pub mod problems;
pub mod rng;
mod runner;
pub mod sde;

pub use enkf::{
    enkf_analysis, enkf_gain, enkf_step, enkf_update, enkf_update_with_perturbations, EnkfConfig,
};
pub use enks::{
    additive_update, blended_denominator, compute_gain, enks_analysis, enks_step, ensemble_mean,
    innovation_covariance, FilterConfig, FilterState, GainClock, GainContext, GainMatrix,
    InnovationRecord, DEFAULT_ALPHA,
};
pub use error::{FilterError, Result};
pub use exec::Execution;
pub use iterative::{
    enks_iterative_analysis, enks_iterative_step, iterate_update, iterative_gain, make_schedule,
    AnnealingSchedule, IterationTrace, DEFAULT_KAPPA,
};
pub use rng::{brownian_increments, particle_streams, RngStream, StreamPurpose};
pub use runner::{FilterKind, FilterRunner};
pub use sde::{
    em_step, initial_ensemble, predict_ensemble, predict_ensemble_with_increments, simulate_truth,
    synth_measurements, Diffusion, Ensemble, MeasurementModel, MeasurementSeries, ProcessModel,
    StateVector, TimeGrid,
};
