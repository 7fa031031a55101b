//! Benchmark harness for the enks filters: experiment configuration, twin
//! runs over the built-in problems, convergence sweeps and CSV/SVG output.

// `!(x > 0.0)` is used throughout because it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod csv_io;
pub mod dataset;
mod error;
pub mod experiment;
pub mod metrics;
pub mod svg;
pub mod sweep;

pub use config::{ExperimentConfig, ModelOverrides, ProblemId, RawConfig};
pub use csv_io::{emit_csv, load_csv};
pub use error::{HarnessError, Result};
pub use experiment::{
    build_problem, run_experiment, run_filters, Estimate, FilterSummary, RunOutcome, RunRecord,
    RunRow,
};
pub use metrics::{loglog_fit, rmse};
pub use svg::emit_linechart;
pub use sweep::{
    convergence_sweep, sweep_with, ConvergencePoint, ConvergenceReport, SweepVariable,
};
