//! Owns the per-particle streams and filter state so callers can feed one
//! measurement at a time without threading RNG plumbing through.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::enkf::{enkf_analysis, EnkfConfig};
use crate::enks::{enks_analysis, FilterConfig, FilterState};
use crate::error::{FilterError, Result};
use crate::exec::Execution;
use crate::iterative::{enks_iterative_analysis, AnnealingSchedule, IterationTrace};
use crate::rng::{particle_streams, RngStream, StreamPurpose};
use crate::sde::{
    predict_ensemble, predict_ensemble_with_increments, Ensemble, MeasurementModel, ProcessModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterKind {
    Enks,
    EnksIterative,
    Enkf,
}

impl FilterKind {
    pub const ALL: [FilterKind; 3] = [
        FilterKind::Enks,
        FilterKind::EnksIterative,
        FilterKind::Enkf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Enks => "enks",
            FilterKind::EnksIterative => "enks_iter",
            FilterKind::Enkf => "enkf",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = FilterError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "enks" => Ok(FilterKind::Enks),
            "enks_iter" | "enks-iter" | "iterative" => Ok(FilterKind::EnksIterative),
            "enkf" => Ok(FilterKind::Enkf),
            other => Err(FilterError::invalid(format!(
                "unknown filter '{other}' (expected enks, enks_iter or enkf)"
            ))),
        }
    }
}

pub struct FilterRunner {
    kind: FilterKind,
    config: FilterConfig,
    enkf: EnkfConfig,
    schedule: AnnealingSchedule,
    exec: Execution,
    state: FilterState,
    streams: Vec<RngStream>,
    perturb: RngStream,
    last_trace: Option<IterationTrace>,
}

impl FilterRunner {
    /// `r` is the per-sample observation covariance used by the EnKF; the
    /// EnKS variants take their noise from `meas`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: FilterKind,
        config: FilterConfig,
        r: DMatrix<f64>,
        schedule: AnnealingSchedule,
        initial: Ensemble,
        meas: &MeasurementModel,
        t0: f64,
        exec: Execution,
    ) -> Result<Self> {
        config.validate()?;
        if initial.size() != config.ensemble_size {
            return Err(FilterError::invalid(
                "initial ensemble size differs from the configuration",
            ));
        }
        let enkf = EnkfConfig::new(config.ensemble_size, config.dt, r, config.seed)?;
        let streams =
            particle_streams(config.seed, StreamPurpose::Prediction, config.ensemble_size);
        let perturb = RngStream::for_purpose(config.seed, StreamPurpose::Perturbation, 0);
        let state = FilterState::initial(initial, meas, t0, exec)?;
        Ok(FilterRunner {
            kind,
            config,
            enkf,
            schedule,
            exec,
            state,
            streams,
            perturb,
            last_trace: None,
        })
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }

    /// Inner-iteration trace of the most recent step (iterative EnKS only).
    pub fn last_trace(&self) -> Option<&IterationTrace> {
        self.last_trace.as_ref()
    }

    /// Predicts one step and assimilates `y`.
    pub fn assimilate(
        &mut self,
        proc: &ProcessModel,
        meas: &MeasurementModel,
        y: &DVector<f64>,
    ) -> Result<&FilterState> {
        let pred = predict_ensemble(
            proc,
            &self.state.ensemble,
            self.state.t_curr,
            self.config.dt,
            &mut self.streams,
            self.exec,
        )?;
        self.analyse(&pred, meas, y)
    }

    /// As [`FilterRunner::assimilate`] with the `m × N` Brownian increments
    /// of the step supplied by the caller instead of drawn from the streams.
    pub fn assimilate_with_increments(
        &mut self,
        proc: &ProcessModel,
        meas: &MeasurementModel,
        y: &DVector<f64>,
        increments: &DMatrix<f64>,
    ) -> Result<&FilterState> {
        let pred = predict_ensemble_with_increments(
            proc,
            &self.state.ensemble,
            self.state.t_curr,
            self.config.dt,
            increments,
            self.exec,
        )?;
        self.analyse(&pred, meas, y)
    }

    fn analyse(
        &mut self,
        pred: &Ensemble,
        meas: &MeasurementModel,
        y: &DVector<f64>,
    ) -> Result<&FilterState> {
        let next = match self.kind {
            FilterKind::Enks => enks_analysis(&self.state, pred, meas, y, &self.config, self.exec)?,
            FilterKind::EnksIterative => {
                let (next, trace) = enks_iterative_analysis(
                    &self.state,
                    pred,
                    meas,
                    y,
                    &self.config,
                    &self.schedule,
                    self.exec,
                )?;
                self.last_trace = Some(trace);
                next
            }
            FilterKind::Enkf => enkf_analysis(
                &self.state,
                pred,
                meas,
                y,
                &self.enkf,
                &mut self.perturb,
                self.exec,
            )?,
        };
        self.state = next;
        Ok(&self.state)
    }
}
