//! Process and measurement models, Euler–Maruyama propagation and synthetic
//! twin-experiment data.
//!
//! The process is the Itô SDE `dX = b(X,t) dt + f(X,t) dB` with `X ∈ ℝⁿ` and
//! `B ∈ ℝᵐ`; measurements are `Y_i = h(X(t_i), t_i) + Δη_i` with `Δη` the
//! increment of a Brownian motion of intensity `ν` over the sampling step.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{FilterError, Result};
use crate::exec::Execution;
use crate::linalg;
use crate::rng::{brownian_increments, RngStream, StreamPurpose};

pub type StateVector = DVector<f64>;

pub type DriftFn = dyn Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync;
pub type DiffusionFn = dyn Fn(&DVector<f64>, f64) -> DMatrix<f64> + Send + Sync;
pub type ObservationFn = dyn Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync;

/// `N` particles of dimension `n`, stored column-wise (`n × N`).
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    particles: DMatrix<f64>,
}

impl Ensemble {
    pub fn new(particles: DMatrix<f64>) -> Result<Self> {
        if particles.ncols() < 2 {
            return Err(FilterError::invalid(format!(
                "an ensemble needs at least 2 particles, got {}",
                particles.ncols()
            )));
        }
        if particles.nrows() == 0 {
            return Err(FilterError::invalid("ensemble state dimension is zero"));
        }
        if !linalg::all_finite(&particles) {
            return Err(FilterError::invalid("ensemble contains non-finite entries"));
        }
        Ok(Ensemble { particles })
    }

    pub fn from_columns(columns: &[DVector<f64>]) -> Result<Self> {
        if columns.is_empty() {
            return Err(FilterError::invalid("no particles given"));
        }
        let n = columns[0].len();
        if columns.iter().any(|c| c.len() != n) {
            return Err(FilterError::invalid("particles differ in dimension"));
        }
        Self::new(DMatrix::from_columns(columns))
    }

    pub fn state_dim(&self) -> usize {
        self.particles.nrows()
    }

    pub fn size(&self) -> usize {
        self.particles.ncols()
    }

    pub fn particles(&self) -> &DMatrix<f64> {
        &self.particles
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.particles
    }

    pub fn particle(&self, j: usize) -> DVector<f64> {
        self.particles.column(j).into_owned()
    }

    pub fn mean(&self) -> DVector<f64> {
        linalg::column_mean(&self.particles)
    }

    /// Per-component sample standard deviation (`N − 1` normalisation).
    pub fn std_dev(&self) -> DVector<f64> {
        let mean = self.mean();
        let a = linalg::anomalies(&self.particles, &mean);
        let denom = self.size() as f64 - 1.0;
        DVector::from_fn(self.state_dim(), |i, _| {
            (a.row(i).iter().map(|v| v * v).sum::<f64>() / denom).sqrt()
        })
    }
}

/// The diffusion field `f(x, t) ∈ ℝ^{n×m}`.
///
/// `Diagonal` stores the diagonal of a square `n × n` field and is applied in
/// `O(n)`; the augmented structural models need this for `n` in the hundreds.
#[derive(Clone)]
pub enum Diffusion {
    Zero,
    Diagonal(DVector<f64>),
    Constant(DMatrix<f64>),
    StateDependent(Arc<DiffusionFn>),
}

impl fmt::Debug for Diffusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diffusion::Zero => write!(f, "Zero"),
            Diffusion::Diagonal(d) => f.debug_tuple("Diagonal").field(&d.as_slice()).finish(),
            Diffusion::Constant(m) => write!(f, "Constant({}x{})", m.nrows(), m.ncols()),
            Diffusion::StateDependent(_) => write!(f, "StateDependent(..)"),
        }
    }
}

#[derive(Clone)]
pub struct ProcessModel {
    n: usize,
    m: usize,
    drift: Arc<DriftFn>,
    diffusion: Diffusion,
}

impl fmt::Debug for ProcessModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProcessModel")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("diffusion", &self.diffusion)
            .finish_non_exhaustive()
    }
}

impl ProcessModel {
    pub fn new<F>(n: usize, m: usize, drift: F, diffusion: Diffusion) -> Result<Self>
    where
        F: Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
    {
        if n == 0 {
            return Err(FilterError::invalid("state dimension must be positive"));
        }
        match &diffusion {
            Diffusion::Diagonal(d) if d.len() != n || m != n => {
                return Err(FilterError::invalid(format!(
                    "diagonal diffusion needs n = m = {}, got n = {n}, m = {m}",
                    d.len()
                )))
            }
            Diffusion::Constant(f) if f.nrows() != n || f.ncols() != m => {
                return Err(FilterError::invalid(format!(
                    "diffusion is {}x{}, expected {n}x{m}",
                    f.nrows(),
                    f.ncols()
                )))
            }
            _ => {}
        }
        Ok(ProcessModel {
            n,
            m,
            drift: Arc::new(drift),
            diffusion,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn noise_dim(&self) -> usize {
        self.m
    }

    pub fn diffusion(&self) -> &Diffusion {
        &self.diffusion
    }

    /// Same drift with a different diffusion field.
    pub fn with_diffusion(&self, m: usize, diffusion: Diffusion) -> Result<Self> {
        let drift = Arc::clone(&self.drift);
        Self::new(self.n, m, move |x, t| drift(x, t), diffusion)
    }

    pub fn drift(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        (self.drift)(x, t)
    }

    pub fn diffusion_matrix(&self, x: &DVector<f64>, t: f64) -> DMatrix<f64> {
        match &self.diffusion {
            Diffusion::Zero => DMatrix::zeros(self.n, self.m),
            Diffusion::Diagonal(d) => DMatrix::from_diagonal(d),
            Diffusion::Constant(f) => f.clone(),
            Diffusion::StateDependent(f) => f(x, t),
        }
    }

    fn apply_diffusion(&self, x: &DVector<f64>, t: f64, db: &DVector<f64>) -> DVector<f64> {
        match &self.diffusion {
            Diffusion::Zero => DVector::zeros(self.n),
            Diffusion::Diagonal(d) => d.component_mul(db),
            Diffusion::Constant(f) => f * db,
            Diffusion::StateDependent(f) => f(x, t) * db,
        }
    }
}

/// Observation operator `h` together with the noise intensity `ν` and the
/// sampling step used to scale it into `σ = ν Δt`.
#[derive(Clone)]
pub struct MeasurementModel {
    q: usize,
    h: Arc<ObservationFn>,
    nu: DMatrix<f64>,
    dt_scale: f64,
}

impl fmt::Debug for MeasurementModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MeasurementModel")
            .field("q", &self.q)
            .field("nu", &self.nu)
            .field("dt_scale", &self.dt_scale)
            .finish_non_exhaustive()
    }
}

impl MeasurementModel {
    pub fn new<H>(q: usize, h: H, nu: DMatrix<f64>, dt_scale: f64) -> Result<Self>
    where
        H: Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
    {
        Self::from_shared(q, Arc::new(h), nu, dt_scale)
    }

    fn from_shared(
        q: usize,
        h: Arc<ObservationFn>,
        nu: DMatrix<f64>,
        dt_scale: f64,
    ) -> Result<Self> {
        if q == 0 {
            return Err(FilterError::invalid(
                "measurement dimension must be positive",
            ));
        }
        if nu.nrows() != q || nu.ncols() != q {
            return Err(FilterError::invalid(format!(
                "noise intensity is {}x{}, expected {q}x{q}",
                nu.nrows(),
                nu.ncols()
            )));
        }
        if !linalg::all_finite(&nu) {
            return Err(FilterError::invalid(
                "noise intensity has non-finite entries",
            ));
        }
        if !(dt_scale > 0.0) || !dt_scale.is_finite() {
            return Err(FilterError::invalid(format!(
                "sampling step must be positive, got {dt_scale}"
            )));
        }
        Ok(MeasurementModel { q, h, nu, dt_scale })
    }

    /// Independent channels whose per-sample noise standard deviation over a
    /// step `dt` is `noise_std`: `ν = diag(noise_std) / √dt`.
    pub fn from_noise_std<H>(q: usize, h: H, noise_std: &DVector<f64>, dt: f64) -> Result<Self>
    where
        H: Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
    {
        if noise_std.len() != q || noise_std.iter().any(|s| !(*s >= 0.0)) {
            return Err(FilterError::invalid(
                "noise_std must have q nonnegative entries",
            ));
        }
        if !(dt > 0.0) {
            return Err(FilterError::invalid("sampling step must be positive"));
        }
        let nu = DMatrix::from_diagonal(&(noise_std / dt.sqrt()));
        Self::new(q, h, nu, dt)
    }

    /// Noise with per-sample covariance `r` over a step `dt`:
    /// `ν = Lᵀ / √dt` where `r = L Lᵀ`, so that `σᵀσ = r Δt`.
    pub fn from_covariance<H>(q: usize, h: H, r: &DMatrix<f64>, dt: f64) -> Result<Self>
    where
        H: Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
    {
        let chol = r.clone().cholesky().ok_or_else(|| {
            FilterError::invalid("measurement covariance is not positive definite")
        })?;
        if !(dt > 0.0) {
            return Err(FilterError::invalid("sampling step must be positive"));
        }
        Self::new(q, h, chol.l().transpose() / dt.sqrt(), dt)
    }

    /// Same observation operator, new noise description.
    pub fn with_noise_std(&self, noise_std: &DVector<f64>, dt: f64) -> Result<Self> {
        if noise_std.len() != self.q {
            return Err(FilterError::invalid("noise_std length differs from q"));
        }
        Self::from_shared(
            self.q,
            Arc::clone(&self.h),
            DMatrix::from_diagonal(&(noise_std / dt.sqrt())),
            dt,
        )
    }

    pub fn meas_dim(&self) -> usize {
        self.q
    }

    pub fn nu(&self) -> &DMatrix<f64> {
        &self.nu
    }

    pub fn dt_scale(&self) -> f64 {
        self.dt_scale
    }

    /// Scaled noise intensity `σ = ν Δt`.
    pub fn sigma(&self) -> DMatrix<f64> {
        &self.nu * self.dt_scale
    }

    pub fn sigma_gram(&self) -> DMatrix<f64> {
        let s = self.sigma();
        s.transpose() * s
    }

    /// Per-sample noise covariance `νᵀν Δt` implied by the intensity.
    pub fn sample_covariance(&self) -> DMatrix<f64> {
        self.nu.transpose() * &self.nu * self.dt_scale
    }

    pub fn observe(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        (self.h)(x, t)
    }

    /// `h` applied to every particle: the `q × N` matrix `H`.
    pub fn observe_ensemble(
        &self,
        ens: &Ensemble,
        t: f64,
        exec: Execution,
    ) -> Result<DMatrix<f64>> {
        let parts = ens.particles();
        let cols = exec.map_indexed(ens.size(), |j| {
            let hj = (self.h)(&parts.column(j).into_owned(), t);
            if hj.len() != self.q {
                return Err(FilterError::invalid(format!(
                    "h returned {} values, expected {}",
                    hj.len(),
                    self.q
                )));
            }
            if hj.iter().any(|v| !v.is_finite()) {
                return Err(
                    FilterError::numeric("non-finite measurement prediction", t).with_particle(j)
                );
            }
            Ok(hj)
        });
        let cols = cols.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_columns(&cols))
    }
}

/// Strictly increasing sample times.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(FilterError::invalid("time grid is empty"));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(FilterError::invalid(
                "time grid must be finite and strictly increasing",
            ));
        }
        Ok(TimeGrid { times })
    }

    /// `t0, t0 + dt, …, t0 + steps·dt`, each point computed directly.
    pub fn uniform(t0: f64, dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(FilterError::invalid("grid step must be positive"));
        }
        Self::new((0..=steps).map(|i| t0 + i as f64 * dt).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSeries {
    times: Vec<f64>,
    values: DMatrix<f64>,
}

impl MeasurementSeries {
    pub fn new(times: Vec<f64>, values: DMatrix<f64>) -> Result<Self> {
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(FilterError::invalid(
                "measurement times must be strictly increasing",
            ));
        }
        if values.ncols() != times.len() {
            return Err(FilterError::invalid(format!(
                "{} measurement columns for {} times",
                values.ncols(),
                times.len()
            )));
        }
        Ok(MeasurementSeries { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn meas_dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn at(&self, i: usize) -> DVector<f64> {
        self.values.column(i).into_owned()
    }
}

/// One explicit Euler–Maruyama step `x + b(x,t) dt + f(x,t) dB`.
pub fn em_step(
    model: &ProcessModel,
    x: &StateVector,
    t: f64,
    dt: f64,
    db: &DVector<f64>,
) -> Result<StateVector> {
    if !(dt > 0.0) {
        return Err(FilterError::invalid(format!(
            "EM step needs dt > 0, got {dt}"
        )));
    }
    if db.len() != model.m {
        return Err(FilterError::invalid(format!(
            "Brownian increment has length {}, model expects {}",
            db.len(),
            model.m
        )));
    }
    if x.len() != model.n {
        return Err(FilterError::invalid(format!(
            "state has length {}, model expects {}",
            x.len(),
            model.n
        )));
    }
    let b = model.drift(x, t);
    if b.len() != model.n {
        return Err(FilterError::invalid(
            "drift returned a vector of the wrong length",
        ));
    }
    let next = x + b * dt + model.apply_diffusion(x, t, db);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(FilterError::numeric(
            "non-finite state after Euler-Maruyama step",
            t,
        ));
    }
    Ok(next)
}

fn check_ensemble(model: &ProcessModel, ens: &Ensemble) -> Result<()> {
    if ens.state_dim() != model.n {
        return Err(FilterError::invalid(format!(
            "ensemble dimension {} differs from model dimension {}",
            ens.state_dim(),
            model.n
        )));
    }
    Ok(())
}

/// Propagates every particle over `[t_prev, t_prev + dt]`, particle `j` drawing
/// its Brownian increment from `streams[j]`.
pub fn predict_ensemble(
    model: &ProcessModel,
    ens: &Ensemble,
    t_prev: f64,
    dt: f64,
    streams: &mut [RngStream],
    exec: Execution,
) -> Result<Ensemble> {
    check_ensemble(model, ens)?;
    if streams.len() != ens.size() {
        return Err(FilterError::invalid(format!(
            "{} streams for {} particles",
            streams.len(),
            ens.size()
        )));
    }
    let parts = ens.particles();
    let m = model.m;
    let cols = exec.map_streams(streams, |j, stream| {
        let db = brownian_increments(stream, m, dt)?;
        em_step(model, &parts.column(j).into_owned(), t_prev, dt, &db)
            .map_err(|e| e.with_particle(j))
    });
    let cols = cols.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        particles: DMatrix::from_columns(&cols),
    })
}

/// As [`predict_ensemble`], with the `m × N` Brownian increments supplied by
/// the caller (used to couple runs at different step sizes).
pub fn predict_ensemble_with_increments(
    model: &ProcessModel,
    ens: &Ensemble,
    t_prev: f64,
    dt: f64,
    increments: &DMatrix<f64>,
    exec: Execution,
) -> Result<Ensemble> {
    check_ensemble(model, ens)?;
    if increments.ncols() != ens.size() || increments.nrows() != model.m {
        return Err(FilterError::invalid("increment matrix must be m x N"));
    }
    let parts = ens.particles();
    let cols = exec.map_indexed(ens.size(), |j| {
        em_step(
            model,
            &parts.column(j).into_owned(),
            t_prev,
            dt,
            &increments.column(j).into_owned(),
        )
        .map_err(|e| e.with_particle(j))
    });
    let cols = cols.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        particles: DMatrix::from_columns(&cols),
    })
}

/// Single EM path on `grid`; column `i` is the state at `grid.times()[i]`,
/// column 0 being `x0`.
pub fn simulate_truth(
    model: &ProcessModel,
    x0: &StateVector,
    grid: &TimeGrid,
    stream: &mut RngStream,
) -> Result<DMatrix<f64>> {
    if x0.len() != model.n {
        return Err(FilterError::invalid(
            "initial state has the wrong dimension",
        ));
    }
    let times = grid.times();
    let mut traj = DMatrix::zeros(model.n, times.len());
    traj.set_column(0, x0);
    let mut x = x0.clone();
    for (i, w) in times.windows(2).enumerate() {
        let dt = w[1] - w[0];
        let db = brownian_increments(stream, model.m, dt)?;
        x = em_step(model, &x, w[0], dt, &db)?;
        traj.set_column(i + 1, &x);
    }
    Ok(traj)
}

/// `Y_i = h(x(t_i), t_i) + ε_i` with `ε_i ~ N(0, diag(noise_std²))`.
pub fn synth_measurements(
    meas: &MeasurementModel,
    traj: &DMatrix<f64>,
    times: &[f64],
    stream: &mut RngStream,
    noise_std: &DVector<f64>,
) -> Result<MeasurementSeries> {
    if traj.ncols() != times.len() {
        return Err(FilterError::invalid(format!(
            "trajectory has {} samples for {} times",
            traj.ncols(),
            times.len()
        )));
    }
    if noise_std.len() != meas.q || noise_std.iter().any(|s| !(*s >= 0.0)) {
        return Err(FilterError::invalid(
            "noise_std must have q nonnegative entries",
        ));
    }
    let mut values = DMatrix::zeros(meas.q, times.len());
    for (i, &t) in times.iter().enumerate() {
        let clean = meas.observe(&traj.column(i).into_owned(), t);
        let noise = stream.normal_vector(meas.q, 1.0).component_mul(noise_std);
        values.set_column(i, &(clean + noise));
    }
    MeasurementSeries::new(times.to_vec(), values)
}

/// Gaussian initial ensemble: particle `j` is `mean + spread ∘ z_j` with
/// `z_j` drawn from its own initial-ensemble stream.
pub fn initial_ensemble(
    mean: &DVector<f64>,
    spread: &DVector<f64>,
    size: usize,
    seed: u64,
) -> Result<Ensemble> {
    if mean.len() != spread.len() {
        return Err(FilterError::invalid("mean and spread differ in length"));
    }
    if spread.iter().any(|s| !(*s >= 0.0)) {
        return Err(FilterError::invalid("spread entries must be nonnegative"));
    }
    let cols: Vec<_> = (0..size as u64)
        .map(|j| {
            let mut s = RngStream::for_purpose(seed, StreamPurpose::InitialEnsemble, j);
            mean + s.normal_vector(mean.len(), 1.0).component_mul(spread)
        })
        .collect();
    Ensemble::new(DMatrix::from_columns(&cols))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(drift: impl Fn(f64) -> f64 + Send + Sync + 'static, f: f64) -> ProcessModel {
        let diffusion = if f == 0.0 {
            Diffusion::Zero
        } else {
            Diffusion::Constant(DMatrix::from_element(1, 1, f))
        };
        ProcessModel::new(
            1,
            1,
            move |x, _| DVector::from_element(1, drift(x[0])),
            diffusion,
        )
        .unwrap()
    }

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn em_step_zero_fields_is_identity() {
        let model = ProcessModel::new(2, 2, |_, _| DVector::zeros(2), Diffusion::Zero).unwrap();
        let x = v(&[1.0, 2.0]);
        let out = em_step(&model, &x, 0.0, 0.01, &v(&[0.3, -0.1])).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn em_step_linear_drift() {
        let model = scalar(|x| x, 0.0);
        let out = em_step(&model, &v(&[1.0]), 0.0, 0.1, &v(&[0.0])).unwrap();
        assert_relative_eq!(out[0], 1.1, epsilon = 1e-15);
    }

    #[test]
    fn em_step_with_noise() {
        let model = scalar(|x| -x, 1.0);
        let out = em_step(&model, &v(&[2.0]), 0.0, 0.01, &v(&[0.05])).unwrap();
        assert_relative_eq!(out[0], 2.03, epsilon = 1e-15);
    }

    #[test]
    fn em_step_errors() {
        let model = scalar(|x| x, 0.0);
        assert!(em_step(&model, &v(&[1.0]), 0.0, 0.0, &v(&[0.0])).is_err());
        assert!(em_step(&model, &v(&[1.0]), 0.0, 0.1, &v(&[0.0, 0.0])).is_err());
        let blowup = scalar(|_| f64::INFINITY, 0.0);
        let err = em_step(&blowup, &v(&[1.0]), 0.5, 0.1, &v(&[0.0])).unwrap_err();
        assert!(matches!(err, FilterError::NumericFailure { time, .. } if time == 0.5));
    }

    #[test]
    fn predict_reports_failing_particle() {
        let model = scalar(|x| if x > 5.0 { f64::NAN } else { 0.0 }, 0.0);
        let ens = Ensemble::new(DMatrix::from_row_slice(1, 3, &[0.0, 10.0, 1.0])).unwrap();
        let mut streams = crate::rng::particle_streams(1, StreamPurpose::Prediction, 3);
        let err = predict_ensemble(&model, &ens, 0.0, 0.1, &mut streams, Execution::Sequential)
            .unwrap_err();
        assert!(matches!(
            err,
            FilterError::NumericFailure {
                particle: Some(1),
                ..
            }
        ));
    }

    #[test]
    fn predict_zero_fields_is_identity() {
        let model = scalar(|_| 0.0, 0.0);
        let ens = Ensemble::new(DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 4.0])).unwrap();
        let mut streams = crate::rng::particle_streams(1, StreamPurpose::Prediction, 3);
        let out =
            predict_ensemble(&model, &ens, 0.0, 0.1, &mut streams, Execution::default()).unwrap();
        assert_eq!(out, ens);
    }

    #[test]
    fn predict_deterministic_drift() {
        let model = scalar(|_| 1.0, 0.0);
        let ens = Ensemble::new(DMatrix::from_row_slice(1, 2, &[0.0, 10.0])).unwrap();
        let mut streams = crate::rng::particle_streams(1, StreamPurpose::Prediction, 2);
        let out =
            predict_ensemble(&model, &ens, 0.0, 0.5, &mut streams, Execution::default()).unwrap();
        assert_eq!(out.particles().as_slice(), &[0.5, 10.5]);
    }

    #[test]
    fn predict_same_across_execution_modes() {
        let model = scalar(|x| -x, 0.7);
        let ens = initial_ensemble(&v(&[1.0]), &v(&[0.5]), 64, 3).unwrap();
        let mut a = crate::rng::particle_streams(9, StreamPurpose::Prediction, 64);
        let mut b = a.clone();
        let pa = predict_ensemble(&model, &ens, 0.0, 0.01, &mut a, Execution::Sequential).unwrap();
        let pb = predict_ensemble(&model, &ens, 0.0, 0.01, &mut b, Execution::Parallel).unwrap();
        assert_eq!(pa, pb);
    }

    #[test]
    fn truth_constant_under_zero_fields() {
        let model = scalar(|_| 0.0, 0.0);
        let grid = TimeGrid::uniform(0.0, 0.1, 10).unwrap();
        let traj = simulate_truth(&model, &v(&[3.0]), &grid, &mut RngStream::new(0, 0)).unwrap();
        assert!(traj.iter().all(|&x| x == 3.0));
        assert_eq!(traj.ncols(), 11);
    }

    #[test]
    fn measurements_without_noise_equal_truth() {
        let meas = MeasurementModel::from_noise_std(1, |x, _| x.clone(), &v(&[0.0]), 0.1).unwrap();
        let traj = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let ser = synth_measurements(
            &meas,
            &traj,
            &[0.1, 0.2, 0.3],
            &mut RngStream::new(0, 0),
            &v(&[0.0]),
        )
        .unwrap();
        assert_eq!(ser.values(), &traj);
        assert!(synth_measurements(
            &meas,
            &traj,
            &[0.1, 0.2],
            &mut RngStream::new(0, 0),
            &v(&[0.0])
        )
        .is_err());
        assert!(synth_measurements(
            &meas,
            &traj,
            &[0.1, 0.2, 0.3],
            &mut RngStream::new(0, 0),
            &v(&[-1.0])
        )
        .is_err());
    }

    #[test]
    fn sigma_scaling_from_noise_std() {
        // per-sample std s over dt  =>  σᵀσ = s² dt and the implied sample covariance is s².
        let meas = MeasurementModel::from_noise_std(1, |x, _| x.clone(), &v(&[0.1]), 0.01).unwrap();
        assert_relative_eq!(meas.sigma_gram()[(0, 0)], 0.01 * 0.01, epsilon = 1e-15);
        assert_relative_eq!(meas.sample_covariance()[(0, 0)], 0.01, epsilon = 1e-15);
        let r = DMatrix::from_row_slice(2, 2, &[0.04, 0.01, 0.01, 0.09]);
        let m2 = MeasurementModel::from_covariance(2, |x, _| x.clone(), &r, 0.1).unwrap();
        assert_relative_eq!(m2.sample_covariance(), r, epsilon = 1e-14);
        assert_relative_eq!(m2.sigma_gram(), &r * 0.1, epsilon = 1e-14);
    }

    #[test]
    fn time_grid_validation() {
        assert!(TimeGrid::new(vec![0.0, 0.1, 0.1]).is_err());
        assert!(TimeGrid::new(vec![]).is_err());
        let g = TimeGrid::uniform(0.0, 0.1, 50).unwrap();
        assert_eq!(g.len(), 51);
        assert_eq!(g.times()[50], 5.0);
    }

    #[test]
    fn ensemble_needs_two_finite_particles() {
        assert!(Ensemble::new(DMatrix::zeros(2, 1)).is_err());
        assert!(Ensemble::new(DMatrix::from_element(1, 2, f64::NAN)).is_err());
    }
}
