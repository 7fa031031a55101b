//! Scalar population model `dX = −r₁(1 − X/r₂) X dt + f dB`. Starting above
//! `r₂` the deterministic solution runs away, which is what makes it a hard
//! filtering test.

use nalgebra::{DMatrix, DVector};

use super::{NoiseLevel, TwinProblem};
use crate::error::{FilterError, Result};
use crate::sde::{Diffusion, MeasurementModel, ProcessModel};

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    pub r1: f64,
    pub r2: f64,
    pub x0: f64,
    pub proc_noise_std: f64,
    pub meas_noise_std: f64,
    pub dt: f64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        PopulationSpec {
            r1: 1.0,
            r2: 2.0,
            x0: 2.1,
            proc_noise_std: 0.2,
            meas_noise_std: 0.1,
            dt: 0.1,
        }
    }
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.r2 > 0.0) || !self.r1.is_finite() || !self.x0.is_finite() {
            return Err(FilterError::invalid(
                "population model needs r2 > 0 and finite r1, x0",
            ));
        }
        if !(self.proc_noise_std >= 0.0) || !(self.meas_noise_std > 0.0) || !(self.dt > 0.0) {
            return Err(FilterError::invalid(
                "population noise levels must be nonnegative (measurement positive) and dt positive",
            ));
        }
        Ok(())
    }
}

pub fn build_population(spec: &PopulationSpec) -> Result<(ProcessModel, MeasurementModel)> {
    spec.validate()?;
    let (r1, r2) = (spec.r1, spec.r2);
    let drift =
        move |x: &DVector<f64>, _t: f64| DVector::from_element(1, -r1 * (1.0 - x[0] / r2) * x[0]);
    let process = ProcessModel::new(
        1,
        1,
        drift,
        Diffusion::Constant(DMatrix::from_element(1, 1, spec.proc_noise_std)),
    )?;
    let measurement = MeasurementModel::from_noise_std(
        1,
        |x: &DVector<f64>, _t: f64| x.clone(),
        &DVector::from_element(1, spec.meas_noise_std),
        spec.dt,
    )?;
    Ok((process, measurement))
}

/// Twin experiment with the prior centred on the known `x0` and spread
/// `prior_spread`.
pub fn population_problem(spec: &PopulationSpec, prior_spread: f64) -> Result<TwinProblem> {
    let (model, measurement) = build_population(spec)?;
    Ok(TwinProblem {
        name: "population".into(),
        truth_model: model.clone(),
        filter_model: model,
        measurement,
        x0: DVector::from_element(1, spec.x0),
        prior_mean: DVector::from_element(1, spec.x0),
        prior_spread: DVector::from_element(1, prior_spread),
        noise: NoiseLevel::Absolute(DVector::from_element(1, spec.meas_noise_std)),
        channels: vec!["x".into()],
    })
}
