//! Non-iterative EnKS: Euler–Maruyama prediction followed by an additive,
//! weight-free update of every particle,
//!
//! ```text
//! φ_j ← φ̃_j + G (Y − h(φ̃_j))
//! G   = (1/N) [ (Φ̃ − Φ̂)(H̃ᵀ t_i − Ĥ_{i−1}ᵀ t_{i−1} − ΔĤᵀ t_i)
//!             + (Φ̂ t_i − Φ̂_{i−1} t_{i−1})(H̃ − Ĥ)ᵀ ]
//!       · [ α S + (1 − α) σᵀσ ]⁻¹,      S = (H̃ − Ĥ)(H̃ − Ĥ)ᵀ / (N − 1)
//! ```
//!
//! with `Φ̂`, `Ĥ` the current predicted means, `Φ̂_{i−1}`, `Ĥ_{i−1}` the means
//! predicted at the previous step and `ΔĤ = Ĥ − Ĥ_{i−1}`. The first factor is
//! evaluated in the equivalent form `(H̃ − Ĥ) t_i + Ĥ_{i−1} Δt`.

use nalgebra::{DMatrix, DVector};

use crate::error::{FilterError, Result};
use crate::exec::Execution;
use crate::linalg;
use crate::rng::RngStream;
use crate::sde::{predict_ensemble, Ensemble, MeasurementModel, ProcessModel};

pub const DEFAULT_ALPHA: f64 = 0.8;

/// Origin of the time products `t_i`, `t_{i−1}` inside the gain.
///
/// `Local` measures time from the previous analysis (`t_{i−1} = 0`,
/// `t_i = Δt`); `Absolute` uses run time. With `Absolute` the gain grows like
/// `t_i / α` once the ensemble spread dominates `σᵀσ`, which amplifies the
/// spread for `t_i > 2α`; long runs diverge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GainClock {
    #[default]
    Local,
    Absolute,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub ensemble_size: usize,
    pub dt: f64,
    pub alpha: f64,
    pub seed: u64,
    /// Diffusion applied to augmented parameter channels by the filter model.
    pub param_diffusion: f64,
    pub clock: GainClock,
}

impl FilterConfig {
    pub fn new(ensemble_size: usize, dt: f64, alpha: f64, seed: u64) -> Result<Self> {
        let cfg = FilterConfig {
            ensemble_size,
            dt,
            alpha,
            seed,
            param_diffusion: 0.01,
            clock: GainClock::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ensemble_size < 2 {
            return Err(FilterError::invalid(format!(
                "ensemble size must be at least 2, got {}",
                self.ensemble_size
            )));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(FilterError::invalid(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        validate_alpha(self.alpha)?;
        if !(self.param_diffusion >= 0.0) {
            return Err(FilterError::invalid("param_diffusion must be nonnegative"));
        }
        Ok(())
    }
}

fn validate_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(FilterError::invalid(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// Filter state after the analysis at `t_curr`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub t_curr: f64,
    pub t_prev: f64,
    pub ensemble: Ensemble,
    /// Ensemble mean of the prediction at `t_curr` (`Φ̂_{i−1}` for the next step).
    pub prev_state_mean: DVector<f64>,
    /// Mean of `h` over the prediction at `t_curr` (`Ĥ_{i−1}` for the next step).
    pub prev_meas_mean: DVector<f64>,
}

impl FilterState {
    /// State at `t0` before any measurement; the lagged means are taken from
    /// the initial ensemble itself.
    pub fn initial(
        ensemble: Ensemble,
        meas: &MeasurementModel,
        t0: f64,
        exec: Execution,
    ) -> Result<Self> {
        let h0 = meas.observe_ensemble(&ensemble, t0, exec)?;
        Ok(FilterState {
            t_curr: t0,
            t_prev: t0,
            prev_state_mean: ensemble.mean(),
            prev_meas_mean: linalg::column_mean(&h0),
            ensemble,
        })
    }

    /// Gain context for the analysis one step of `dt` after `t_curr`.
    pub fn next_context(&self, dt: f64) -> GainContext<'_> {
        GainContext {
            t_curr: self.t_curr + dt,
            t_prev: self.t_curr,
            prev_state_mean: &self.prev_state_mean,
            prev_meas_mean: &self.prev_meas_mean,
        }
    }
}

/// The lagged quantities the gain needs at analysis time `t_curr`.
#[derive(Debug, Clone, Copy)]
pub struct GainContext<'a> {
    pub t_curr: f64,
    pub t_prev: f64,
    pub prev_state_mean: &'a DVector<f64>,
    pub prev_meas_mean: &'a DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix(DMatrix<f64>);

impl GainMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if !linalg::all_finite(&values) {
            return Err(FilterError::invalid("gain has non-finite entries"));
        }
        Ok(GainMatrix(values))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&g| g == 0.0)
    }
}

/// Per-particle innovations `Y − h(φ̃_j)` and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct InnovationRecord {
    pub innovations: DMatrix<f64>,
    pub mean: DVector<f64>,
}

impl InnovationRecord {
    pub fn new(y: &DVector<f64>, h_pred: &DMatrix<f64>) -> Result<Self> {
        if y.len() != h_pred.nrows() {
            return Err(FilterError::invalid(
                "measurement and prediction differ in dimension",
            ));
        }
        let mut innovations = -h_pred.clone();
        for mut col in innovations.column_iter_mut() {
            col += y;
        }
        let mean = linalg::column_mean(&innovations);
        Ok(InnovationRecord { innovations, mean })
    }
}

pub fn ensemble_mean(particles: &DMatrix<f64>) -> Result<DVector<f64>> {
    if particles.ncols() == 0 {
        return Err(FilterError::invalid("mean of an empty ensemble"));
    }
    Ok(linalg::column_mean(particles))
}

/// `(1/(N−1)) Σ_j (h_j − h̄)(h_j − h̄)ᵀ`.
pub fn innovation_covariance(h_pred: &DMatrix<f64>, h_mean: &DVector<f64>) -> Result<DMatrix<f64>> {
    if h_pred.ncols() < 2 {
        return Err(FilterError::invalid(
            "innovation covariance needs at least 2 particles",
        ));
    }
    if h_mean.len() != h_pred.nrows() {
        return Err(FilterError::invalid(
            "mean length differs from measurement dimension",
        ));
    }
    let b = linalg::anomalies(h_pred, h_mean);
    Ok(linalg::symmetrize(&linalg::sample_cross_covariance(&b, &b)))
}

/// `α S + (1 − α) σᵀσ`; fails if the result is not positive definite.
pub fn blended_denominator(
    s: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    alpha: f64,
) -> Result<DMatrix<f64>> {
    validate_alpha(alpha)?;
    if s.shape() != sigma.shape() || !s.is_square() {
        return Err(FilterError::invalid(
            "S and sigma must be square and of equal size",
        ));
    }
    let d = linalg::symmetrize(&(s * alpha + sigma.transpose() * sigma * (1.0 - alpha)));
    if !linalg::all_finite(&d) || d.clone().cholesky().is_none() {
        return Err(FilterError::numeric(
            "gain denominator is not positive definite",
            f64::NAN,
        ));
    }
    Ok(d)
}

/// Gain for an ensemble `phi` with measurement predictions `h` at the time
/// described by `ctx`; shared by the plain and the iterated update.
pub(crate) fn gain_for(
    phi: &DMatrix<f64>,
    h: &DMatrix<f64>,
    ctx: &GainContext<'_>,
    alpha: f64,
    clock: GainClock,
    sigma: &DMatrix<f64>,
) -> Result<GainMatrix> {
    let n = phi.nrows();
    let q = h.nrows();
    let big_n = phi.ncols();
    if h.ncols() != big_n {
        return Err(FilterError::invalid(
            "state and measurement ensembles differ in size",
        ));
    }
    if big_n < 2 {
        return Err(FilterError::invalid("gain needs at least 2 particles"));
    }
    if ctx.prev_state_mean.len() != n || ctx.prev_meas_mean.len() != q {
        return Err(FilterError::invalid(
            "lagged means have the wrong dimension",
        ));
    }
    if sigma.nrows() != q || sigma.ncols() != q {
        return Err(FilterError::invalid("sigma must be q x q"));
    }
    let step = ctx.t_curr - ctx.t_prev;
    let (t_i, t_lag) = match clock {
        GainClock::Local => (step, 0.0),
        GainClock::Absolute => (ctx.t_curr, ctx.t_prev),
    };

    let phi_mean = linalg::column_mean(phi);
    let h_mean = linalg::column_mean(h);
    let a = linalg::anomalies(phi, &phi_mean);
    let b = linalg::anomalies(h, &h_mean);

    // (h_j − ĥ) t_i + ĥ_{i−1} Δt, column by column
    let mut first_factor = &b * t_i;
    let lag_term = ctx.prev_meas_mean * step;
    for mut col in first_factor.column_iter_mut() {
        col += &lag_term;
    }
    let drift_of_mean = &phi_mean * t_i - ctx.prev_state_mean * t_lag;
    let numerator =
        (&a * first_factor.transpose() + drift_of_mean * b.column_sum().transpose()) / big_n as f64;

    let s = linalg::symmetrize(&linalg::sample_cross_covariance(&b, &b));
    let d = blended_denominator(&s, sigma, alpha).map_err(|e| match e {
        FilterError::NumericFailure { what, .. } => FilterError::numeric(what, ctx.t_curr),
        other => other,
    })?;
    let g = linalg::spd_right_solve(&numerator, &d)
        .ok_or_else(|| FilterError::numeric("gain solve failed", ctx.t_curr))?;
    GainMatrix::new(g).map_err(|_| FilterError::numeric("non-finite gain", ctx.t_curr))
}

/// Gain for the predicted ensemble `pred` (`Φ̃`) and its measurement
/// predictions `h_pred` (`H̃`); `ctx.t_curr` is the analysis time.
pub fn compute_gain(
    pred: &Ensemble,
    h_pred: &DMatrix<f64>,
    ctx: &GainContext<'_>,
    cfg: &FilterConfig,
    sigma: &DMatrix<f64>,
) -> Result<GainMatrix> {
    gain_for(pred.particles(), h_pred, ctx, cfg.alpha, cfg.clock, sigma)
}

/// `φ_j + G (Y − h_j)` for every column; no weights, no resampling.
pub fn additive_update(
    pred: &Ensemble,
    gain: &GainMatrix,
    y: &DVector<f64>,
    h_pred: &DMatrix<f64>,
) -> Result<Ensemble> {
    scaled_update(pred.particles(), gain, 1.0, y, h_pred).and_then(Ensemble::new)
}

pub(crate) fn scaled_update(
    phi: &DMatrix<f64>,
    gain: &GainMatrix,
    beta: f64,
    y: &DVector<f64>,
    h: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let g = gain.values();
    if g.nrows() != phi.nrows()
        || g.ncols() != y.len()
        || h.nrows() != y.len()
        || h.ncols() != phi.ncols()
    {
        return Err(FilterError::invalid(
            "update operands have inconsistent shapes",
        ));
    }
    let innov = InnovationRecord::new(y, h)?;
    let increment = g * innov.innovations;
    Ok(if beta == 1.0 {
        phi + increment
    } else {
        phi + increment * beta
    })
}

/// One prediction–update cycle from `state.t_curr` to `state.t_curr + cfg.dt`.
pub fn enks_step(
    state: &FilterState,
    proc: &ProcessModel,
    meas: &MeasurementModel,
    y: &DVector<f64>,
    cfg: &FilterConfig,
    streams: &mut [RngStream],
    exec: Execution,
) -> Result<FilterState> {
    cfg.validate()?;
    let pred = predict_ensemble(proc, &state.ensemble, state.t_curr, cfg.dt, streams, exec)?;
    enks_analysis(state, &pred, meas, y, cfg, exec)
}

/// The update half of [`enks_step`] for an externally predicted ensemble
/// `pred` at `state.t_curr + cfg.dt`.
pub fn enks_analysis(
    state: &FilterState,
    pred: &Ensemble,
    meas: &MeasurementModel,
    y: &DVector<f64>,
    cfg: &FilterConfig,
    exec: Execution,
) -> Result<FilterState> {
    if y.len() != meas.meas_dim() {
        return Err(FilterError::invalid(format!(
            "measurement has length {}, expected {}",
            y.len(),
            meas.meas_dim()
        )));
    }
    let ctx = state.next_context(cfg.dt);
    let h_pred = meas.observe_ensemble(pred, ctx.t_curr, exec)?;
    let gain = compute_gain(pred, &h_pred, &ctx, cfg, &meas.sigma())?;
    let updated = scaled_update(pred.particles(), &gain, 1.0, y, &h_pred)?;
    if !linalg::all_finite(&updated) {
        return Err(FilterError::numeric(
            "non-finite particle after update",
            ctx.t_curr,
        ));
    }
    Ok(FilterState {
        t_curr: ctx.t_curr,
        t_prev: state.t_curr,
        prev_state_mean: pred.mean(),
        prev_meas_mean: linalg::column_mean(&h_pred),
        ensemble: Ensemble::new(updated)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn row(xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, xs.len(), xs)
    }

    #[test]
    fn mean_of_columns() {
        let m = DMatrix::from_columns(&[
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![3.0, 0.0]),
        ]);
        assert_eq!(ensemble_mean(&m).unwrap().as_slice(), &[2.0, 0.0]);
        let single = DMatrix::from_column_slice(3, 1, &[0.1, 0.2, 0.7]);
        assert_eq!(ensemble_mean(&single).unwrap().as_slice(), &[0.1, 0.2, 0.7]);
        assert!(ensemble_mean(&DMatrix::zeros(2, 0)).is_err());
    }

    #[test]
    fn innovation_covariance_cases() {
        let same = row(&[0.3, 0.3, 0.3]);
        let c = innovation_covariance(&same, &ensemble_mean(&same).unwrap()).unwrap();
        assert_eq!(c[(0, 0)], 0.0);

        let two = row(&[1.0, 3.0]);
        let c = innovation_covariance(&two, &DVector::from_element(1, 2.0)).unwrap();
        assert_relative_eq!(c[(0, 0)], 2.0, epsilon = 1e-15);

        assert!(innovation_covariance(&row(&[1.0]), &DVector::from_element(1, 1.0)).is_err());
    }

    #[test]
    fn denominator_cases() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        let d = blended_denominator(&DMatrix::zeros(2, 2), &i2, 0.8).unwrap();
        assert_relative_eq!(d, &i2 * 0.2, epsilon = 1e-15);
        for alpha in [0.1, 0.5, 0.9] {
            let d = blended_denominator(&i2, &i2, alpha).unwrap();
            assert_relative_eq!(d, i2.clone(), epsilon = 1e-15);
        }
        assert!(blended_denominator(&i2, &i2, 0.0).is_err());
        assert!(blended_denominator(&i2, &i2, 1.0).is_err());
        assert!(matches!(
            blended_denominator(&DMatrix::zeros(2, 2), &DMatrix::zeros(2, 2), 0.5),
            Err(FilterError::NumericFailure { .. })
        ));
    }

    #[test]
    fn update_cases() {
        let pred = Ensemble::new(row(&[1.0, 4.0])).unwrap();
        let h = row(&[1.0, 2.0]);
        let zero = GainMatrix::new(DMatrix::zeros(1, 1)).unwrap();
        assert_eq!(
            additive_update(&pred, &zero, &DVector::from_element(1, 9.0), &h).unwrap(),
            pred
        );

        let g = GainMatrix::new(DMatrix::from_element(1, 1, 0.5)).unwrap();
        let matched = DMatrix::from_row_slice(1, 2, &[3.0, 3.0]);
        assert_eq!(
            additive_update(&pred, &g, &DVector::from_element(1, 3.0), &matched).unwrap(),
            pred
        );

        let out = additive_update(&pred, &g, &DVector::from_element(1, 2.0), &h).unwrap();
        assert_eq!(out.particles()[(0, 0)], 1.5);
    }

    #[test]
    fn config_validation() {
        assert!(FilterConfig::new(1, 0.1, 0.8, 0).is_err());
        assert!(FilterConfig::new(10, 0.0, 0.8, 0).is_err());
        assert!(FilterConfig::new(10, 0.1, 1.0, 0).is_err());
        assert!(FilterConfig::new(10, 0.1, DEFAULT_ALPHA, 0).is_ok());
    }

    #[test]
    fn innovation_record_mean_is_row_average() {
        let rec =
            InnovationRecord::new(&DVector::from_element(1, 2.0), &row(&[1.0, 2.0, 6.0])).unwrap();
        assert_eq!(rec.innovations.as_slice(), &[1.0, 0.0, -4.0]);
        assert_eq!(rec.mean[0], -1.0);
    }
}
