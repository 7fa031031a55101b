//! Iterated EnKS update: at a fixed analysis time the ensemble is corrected
//! `κ` times,
//!
//! ```text
//! Φ_k = Φ_{k−1} + β_{k−1} G_{k−1} (Y − H_{k−1}),   k = 1..κ,   Φ_0 = Φ̃
//! ```
//!
//! with `G_{k−1}` the EnKS gain re-evaluated on the current iterate and
//! `h` re-applied to it each pass. The lagged means stay those of the outer
//! time step.

use nalgebra::{DMatrix, DVector};

use crate::enks::{gain_for, scaled_update, FilterConfig, FilterState, GainContext, GainMatrix};
use crate::error::{FilterError, Result};
use crate::exec::Execution;
use crate::linalg;
use crate::rng::RngStream;
use crate::sde::{predict_ensemble, Ensemble, MeasurementModel, ProcessModel};

pub const DEFAULT_KAPPA: usize = 10;

/// Multipliers `β_0 ≤ β_1 ≤ … ≤ β_{κ−1} = 1`, all positive.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnealingSchedule {
    betas: Vec<f64>,
}

impl AnnealingSchedule {
    pub fn new(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(FilterError::invalid(
                "schedule needs at least one multiplier",
            ));
        }
        if betas.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
            return Err(FilterError::invalid(
                "schedule multipliers must be positive and finite",
            ));
        }
        if betas.windows(2).any(|w| w[1] < w[0]) {
            return Err(FilterError::invalid("schedule must be nondecreasing"));
        }
        if *betas.last().unwrap() != 1.0 {
            return Err(FilterError::invalid("schedule must end at exactly 1"));
        }
        Ok(AnnealingSchedule { betas })
    }

    pub fn kappa(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }
}

/// `β_k = exp(k + 1 − κ)` for `k = 0..κ`.
pub fn make_schedule(kappa: usize) -> Result<AnnealingSchedule> {
    if kappa < 1 {
        return Err(FilterError::invalid("kappa must be at least 1"));
    }
    let betas = (0..kappa)
        .map(|k| (k as f64 + 1.0 - kappa as f64).exp())
        .collect();
    AnnealingSchedule::new(betas)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationTrace {
    /// `‖Φ_k − Φ_{k−1}‖_F` for `k = 1..κ`.
    pub residuals: Vec<f64>,
    /// `‖Y − mean_j h(φ_{k,j})‖` after each pass.
    pub innovation_norms: Vec<f64>,
}

impl IterationTrace {
    /// True if the residuals never increase from pass `from` (1-based) on.
    pub fn nonincreasing_from(&self, from: usize) -> bool {
        let start = from.saturating_sub(1);
        self.residuals
            .get(start..)
            .map(|r| r.windows(2).all(|w| w[1] <= w[0]))
            .unwrap_or(true)
    }
}

/// The EnKS gain evaluated on the iterate `ens_k` and its predictions `h_k`.
pub fn iterative_gain(
    ens_k: &Ensemble,
    h_k: &DMatrix<f64>,
    ctx: &GainContext<'_>,
    cfg: &FilterConfig,
    sigma: &DMatrix<f64>,
) -> Result<GainMatrix> {
    gain_for(ens_k.particles(), h_k, ctx, cfg.alpha, cfg.clock, sigma)
}

/// Runs all `κ` damped passes starting from the prediction `pred`.
pub fn iterate_update(
    pred: &Ensemble,
    ctx: &GainContext<'_>,
    y: &DVector<f64>,
    schedule: &AnnealingSchedule,
    meas: &MeasurementModel,
    cfg: &FilterConfig,
    exec: Execution,
) -> Result<(Ensemble, IterationTrace)> {
    let h0 = meas.observe_ensemble(pred, ctx.t_curr, exec)?;
    iterate_from(pred, h0, ctx, y, schedule, meas, cfg, exec)
}

#[allow(clippy::too_many_arguments)]
fn iterate_from(
    pred: &Ensemble,
    h0: DMatrix<f64>,
    ctx: &GainContext<'_>,
    y: &DVector<f64>,
    schedule: &AnnealingSchedule,
    meas: &MeasurementModel,
    cfg: &FilterConfig,
    exec: Execution,
) -> Result<(Ensemble, IterationTrace)> {
    if y.len() != meas.meas_dim() {
        return Err(FilterError::invalid("measurement has the wrong dimension"));
    }
    let sigma = meas.sigma();
    let mut phi = pred.particles().clone();
    let mut h = h0;
    let mut trace = IterationTrace::default();
    for (k, &beta) in schedule.betas().iter().enumerate() {
        let pass = k + 1;
        let gain = gain_for(&phi, &h, ctx, cfg.alpha, cfg.clock, &sigma)
            .map_err(|e| e.with_iteration(pass))?;
        let next = scaled_update(&phi, &gain, beta, y, &h)?;
        if !linalg::all_finite(&next) {
            return Err(FilterError::numeric("non-finite iterate", ctx.t_curr).with_iteration(pass));
        }
        trace.residuals.push((&next - &phi).norm());
        phi = next;
        let iterate = Ensemble::new(phi.clone())?;
        h = meas
            .observe_ensemble(&iterate, ctx.t_curr, exec)
            .map_err(|e| e.with_iteration(pass))?;
        trace
            .innovation_norms
            .push((y - linalg::column_mean(&h)).norm());
    }
    Ok((Ensemble::new(phi)?, trace))
}

/// Prediction followed by the iterated update; the lagged means advance to
/// the predicted means exactly as in [`crate::enks::enks_step`].
#[allow(clippy::too_many_arguments)]
pub fn enks_iterative_step(
    state: &FilterState,
    proc: &ProcessModel,
    meas: &MeasurementModel,
    y: &DVector<f64>,
    cfg: &FilterConfig,
    schedule: &AnnealingSchedule,
    streams: &mut [RngStream],
    exec: Execution,
) -> Result<(FilterState, IterationTrace)> {
    cfg.validate()?;
    let pred = predict_ensemble(proc, &state.ensemble, state.t_curr, cfg.dt, streams, exec)?;
    enks_iterative_analysis(state, &pred, meas, y, cfg, schedule, exec)
}

/// The update half of [`enks_iterative_step`].
pub fn enks_iterative_analysis(
    state: &FilterState,
    pred: &Ensemble,
    meas: &MeasurementModel,
    y: &DVector<f64>,
    cfg: &FilterConfig,
    schedule: &AnnealingSchedule,
    exec: Execution,
) -> Result<(FilterState, IterationTrace)> {
    let ctx = state.next_context(cfg.dt);
    let h_pred = meas.observe_ensemble(pred, ctx.t_curr, exec)?;
    let pred_meas_mean = linalg::column_mean(&h_pred);
    let (ensemble, trace) = iterate_from(pred, h_pred, &ctx, y, schedule, meas, cfg, exec)?;
    Ok((
        FilterState {
            t_curr: ctx.t_curr,
            t_prev: state.t_curr,
            prev_state_mean: pred.mean(),
            prev_meas_mean: pred_meas_mean,
            ensemble,
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_pass_schedule_is_undamped() {
        assert_eq!(make_schedule(1).unwrap().betas(), &[1.0]);
        assert!(make_schedule(0).is_err());
    }

    #[test]
    fn default_schedule_values() {
        let s = make_schedule(DEFAULT_KAPPA).unwrap();
        let b = s.betas();
        assert_eq!(b.len(), 10);
        assert_eq!(b[9], 1.0);
        assert_relative_eq!(b[8], (-1.0f64).exp(), epsilon = 1e-16);
        assert_relative_eq!(b[0], (-9.0f64).exp(), epsilon = 1e-18);
        assert!(b.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn schedule_invariants_hold_up_to_fifty() {
        for kappa in 1..=50 {
            let s = make_schedule(kappa).unwrap();
            assert_eq!(s.kappa(), kappa);
            assert_eq!(*s.betas().last().unwrap(), 1.0);
            assert!(s.betas().iter().all(|&b| b > 0.0));
            assert!(s.betas().windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn custom_schedules_are_validated() {
        assert!(AnnealingSchedule::new(vec![0.5, 1.0]).is_ok());
        assert!(AnnealingSchedule::new(vec![1.0, 0.5]).is_err());
        assert!(AnnealingSchedule::new(vec![0.5, 0.9]).is_err());
        assert!(AnnealingSchedule::new(vec![0.0, 1.0]).is_err());
        assert!(AnnealingSchedule::new(vec![]).is_err());
    }

    #[test]
    fn trace_monotonicity_check() {
        let t = IterationTrace {
            residuals: vec![0.1, 3.0, 2.0, 2.0, 1.0],
            innovation_norms: vec![],
        };
        assert!(t.nonincreasing_from(2));
        assert!(!t.nonincreasing_from(1));
    }
}
