//! Twin-experiment problems: the structural identification benchmarks, the
//! population model and a linear-Gaussian problem with an exact Kalman oracle.
//!
//! Each builder turns a physical description into a [`ProcessModel`] /
//! [`MeasurementModel`] pair. [`TwinProblem`] bundles the truth and filter
//! models with priors so that synthetic data can be generated from a seed.

mod frame;
mod linear;
mod pendulum;
mod population;

pub use frame::{
    build_damaged_frame, build_shear_frame, damaged_frame_problem, frame_problem,
    tridiagonal_stiffness, ShearFrameSpec,
};
pub use linear::{
    build_linear_gaussian, kalman_oracle, linear_gaussian_problem, KalmanTrajectory,
    LinearGaussianSpec,
};
pub use pendulum::{build_pendulum, pendulum_problem, PendulumSpec};
pub use population::{build_population, population_problem, PopulationSpec};

use nalgebra::{DMatrix, DVector};

use crate::error::{FilterError, Result};
use crate::rng::{RngStream, StreamPurpose};
use crate::sde::{
    simulate_truth, synth_measurements, MeasurementModel, MeasurementSeries, ProcessModel, TimeGrid,
};

/// How the synthetic measurement noise level is fixed.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseLevel {
    /// Per-channel standard deviation.
    Absolute(DVector<f64>),
    /// Fraction of each channel's standard deviation over the noise-free
    /// measurement signal of the run.
    RelativeToSignal(f64),
}

#[derive(Debug, Clone)]
pub struct TwinProblem {
    pub name: String,
    /// Model that generates the truth (parameters held constant).
    pub truth_model: ProcessModel,
    /// Model the filters propagate (parameter channels diffuse).
    pub filter_model: ProcessModel,
    pub measurement: MeasurementModel,
    pub x0: DVector<f64>,
    pub prior_mean: DVector<f64>,
    pub prior_spread: DVector<f64>,
    pub noise: NoiseLevel,
    pub channels: Vec<String>,
}

/// Truth on the full grid plus measurements at `t_1..t_M`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinData {
    pub grid: TimeGrid,
    /// `n × (M + 1)`, column 0 at `t_0`.
    pub truth: DMatrix<f64>,
    pub series: MeasurementSeries,
    pub noise_std: DVector<f64>,
}

impl TwinData {
    pub fn steps(&self) -> usize {
        self.series.len()
    }
}

impl TwinProblem {
    pub fn state_dim(&self) -> usize {
        self.x0.len()
    }

    /// Simulates truth over `steps` steps of `dt` from `t = 0` and corrupts it
    /// into one measurement per step.
    pub fn generate(&self, dt: f64, steps: usize, seed: u64) -> Result<TwinData> {
        if steps == 0 {
            return Err(FilterError::invalid(
                "a twin experiment needs at least one step",
            ));
        }
        let grid = TimeGrid::uniform(0.0, dt, steps)?;
        let mut truth_stream = RngStream::for_purpose(seed, StreamPurpose::Truth, 0);
        let truth = simulate_truth(&self.truth_model, &self.x0, &grid, &mut truth_stream)?;
        let times = grid.times()[1..].to_vec();
        let sampled = truth.columns(1, steps).into_owned();
        let noise_std = match &self.noise {
            NoiseLevel::Absolute(s) => s.clone(),
            NoiseLevel::RelativeToSignal(frac) => {
                let clean = synth_measurements(
                    &self.measurement,
                    &sampled,
                    &times,
                    &mut RngStream::new(0, 0),
                    &DVector::zeros(self.measurement.meas_dim()),
                )?;
                signal_std(clean.values()) * *frac
            }
        };
        let mut meas_stream = RngStream::for_purpose(seed, StreamPurpose::Measurement, 0);
        let series = synth_measurements(
            &self.measurement,
            &sampled,
            &times,
            &mut meas_stream,
            &noise_std,
        )?;
        Ok(TwinData {
            grid,
            truth,
            series,
            noise_std,
        })
    }

    /// Measurement model whose intensity matches the data's noise level.
    pub fn filter_measurement(&self, data: &TwinData, dt: f64) -> Result<MeasurementModel> {
        self.measurement.with_noise_std(&data.noise_std, dt)
    }

    /// Diagonal observation-error covariance matching the data.
    pub fn observation_covariance(&self, data: &TwinData) -> DMatrix<f64> {
        DMatrix::from_diagonal(&data.noise_std.map(|s| s * s))
    }
}

/// Per-row standard deviation (population normalisation) of a `q × M` signal.
pub fn signal_std(values: &DMatrix<f64>) -> DVector<f64> {
    let m = values.ncols() as f64;
    DVector::from_fn(values.nrows(), |i, _| {
        let row = values.row(i);
        let mean = row.sum() / m;
        (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m).sqrt()
    })
}

/// Fills a prior spread vector where the builder knows only fractions.
pub(crate) fn relative_spread(values: &DVector<f64>, frac: f64, floor: f64) -> DVector<f64> {
    values.map(|v| (v.abs() * frac).max(floor))
}
