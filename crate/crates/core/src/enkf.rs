//! Stochastic (perturbed-observation) ensemble Kalman filter, the reference
//! method the EnKS is compared against.

use nalgebra::{DMatrix, DVector};

use crate::enks::FilterState;
use crate::error::{FilterError, Result};
use crate::exec::Execution;
use crate::linalg;
use crate::rng::RngStream;
use crate::sde::{predict_ensemble, Ensemble, MeasurementModel, ProcessModel};

#[derive(Debug, Clone, PartialEq)]
pub struct EnkfConfig {
    pub ensemble_size: usize,
    pub dt: f64,
    /// Observation-error covariance.
    pub r: DMatrix<f64>,
    pub seed: u64,
}

impl EnkfConfig {
    pub fn new(ensemble_size: usize, dt: f64, r: DMatrix<f64>, seed: u64) -> Result<Self> {
        let cfg = EnkfConfig {
            ensemble_size,
            dt,
            r,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ensemble_size < 2 {
            return Err(FilterError::invalid("EnKF needs at least 2 particles"));
        }
        if !(self.dt > 0.0) {
            return Err(FilterError::invalid("dt must be positive"));
        }
        if !self.r.is_square()
            || (&self.r - self.r.transpose()).amax() > 1e-12 * self.r.amax().max(1.0)
        {
            return Err(FilterError::invalid("R must be square and symmetric"));
        }
        if self.r.clone().cholesky().is_none() {
            return Err(FilterError::invalid("R must be positive definite"));
        }
        Ok(())
    }

    fn r_cholesky(&self) -> DMatrix<f64> {
        self.r
            .clone()
            .cholesky()
            .map(|c| c.l())
            .unwrap_or_else(|| DMatrix::zeros(self.r.nrows(), self.r.ncols()))
    }
}

/// `C_xh (C_hh + R)⁻¹` from the forecast anomalies.
pub fn enkf_gain(pred: &Ensemble, h_pred: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let x = pred.particles();
    let a = linalg::anomalies(x, &linalg::column_mean(x));
    let b = linalg::anomalies(h_pred, &linalg::column_mean(h_pred));
    let c_xh = linalg::sample_cross_covariance(&a, &b);
    let c_hh = linalg::symmetrize(&linalg::sample_cross_covariance(&b, &b));
    linalg::spd_right_solve(&c_xh, &linalg::symmetrize(&(c_hh + r)))
        .ok_or_else(|| FilterError::numeric("C_hh + R is not positive definite", f64::NAN))
}

/// Analysis with explicitly supplied observation perturbations (`q × N`).
pub fn enkf_update_with_perturbations(
    pred: &Ensemble,
    h_pred: &DMatrix<f64>,
    y: &DVector<f64>,
    r: &DMatrix<f64>,
    perturbations: &DMatrix<f64>,
) -> Result<Ensemble> {
    let q = y.len();
    let n_part = pred.size();
    if h_pred.nrows() != q
        || h_pred.ncols() != n_part
        || r.nrows() != q
        || perturbations.shape() != (q, n_part)
    {
        return Err(FilterError::invalid(
            "EnKF operands have inconsistent shapes",
        ));
    }
    let gain = enkf_gain(pred, h_pred, r)?;
    let mut innov = perturbations - h_pred;
    for mut col in innov.column_iter_mut() {
        col += y;
    }
    let analysis = pred.particles() + gain * innov;
    if !linalg::all_finite(&analysis) {
        return Err(FilterError::numeric("non-finite EnKF analysis", f64::NAN));
    }
    Ensemble::new(analysis)
}

/// Perturbed-observation analysis, `ε_j ~ N(0, R)` drawn from `stream`.
pub fn enkf_update(
    pred: &Ensemble,
    h_pred: &DMatrix<f64>,
    y: &DVector<f64>,
    cfg: &EnkfConfig,
    stream: &mut RngStream,
) -> Result<Ensemble> {
    let q = y.len();
    let l = cfg.r_cholesky();
    let z = DMatrix::from_fn(q, pred.size(), |_, _| stream.standard_normal());
    enkf_update_with_perturbations(pred, h_pred, y, &cfg.r, &(l * z))
}

/// Prediction through the process model followed by [`enkf_update`].
#[allow(clippy::too_many_arguments)]
pub fn enkf_step(
    state: &FilterState,
    proc: &ProcessModel,
    meas: &MeasurementModel,
    y: &DVector<f64>,
    cfg: &EnkfConfig,
    streams: &mut [RngStream],
    perturb: &mut RngStream,
    exec: Execution,
) -> Result<FilterState> {
    cfg.validate()?;
    let pred = predict_ensemble(proc, &state.ensemble, state.t_curr, cfg.dt, streams, exec)?;
    enkf_analysis(state, &pred, meas, y, cfg, perturb, exec)
}

/// The update half of [`enkf_step`].
pub fn enkf_analysis(
    state: &FilterState,
    pred: &Ensemble,
    meas: &MeasurementModel,
    y: &DVector<f64>,
    cfg: &EnkfConfig,
    perturb: &mut RngStream,
    exec: Execution,
) -> Result<FilterState> {
    if y.len() != meas.meas_dim() {
        return Err(FilterError::invalid("measurement has the wrong dimension"));
    }
    let t_next = state.t_curr + cfg.dt;
    let h_pred = meas.observe_ensemble(pred, t_next, exec)?;
    let ensemble = enkf_update(pred, &h_pred, y, cfg, perturb).map_err(|e| match e {
        FilterError::NumericFailure { what, .. } => FilterError::numeric(what, t_next),
        other => other,
    })?;
    Ok(FilterState {
        t_curr: t_next,
        t_prev: state.t_curr,
        prev_state_mean: pred.mean(),
        prev_meas_mean: linalg::column_mean(&h_pred),
        ensemble,
    })
}
