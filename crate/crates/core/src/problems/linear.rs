//! Linear-Gaussian problem `dX = A X dt + F dB`, `Y_i = H X(t_i) + ε_i`,
//! `ε_i ~ N(0, R)`, where the Kalman filter on the Euler-discretised model is
//! the exact filter and serves as ground truth.

use nalgebra::{DMatrix, DVector};

use super::{NoiseLevel, TwinProblem};
use crate::error::{FilterError, Result};
use crate::linalg;
use crate::sde::{Diffusion, MeasurementModel, MeasurementSeries, ProcessModel};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianSpec {
    pub a: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub h: DMatrix<f64>,
    /// Per-sample observation-error covariance.
    pub r: DMatrix<f64>,
    pub x0_mean: DVector<f64>,
    pub x0_cov: DMatrix<f64>,
}

impl LinearGaussianSpec {
    /// `dX = a X dt + f dB`, `Y = X + ε`, `ε ~ N(0, r)`, prior `N(0, p0)`.
    pub fn scalar(a: f64, f: f64, r: f64, p0: f64) -> Self {
        let one = |v: f64| DMatrix::from_element(1, 1, v);
        LinearGaussianSpec {
            a: one(a),
            f: one(f),
            h: one(1.0),
            r: one(r),
            x0_mean: DVector::zeros(1),
            x0_cov: one(p0),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn meas_dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        let q = self.h.nrows();
        if n == 0 || q == 0 || !self.a.is_square() {
            return Err(FilterError::invalid(
                "A must be square and nonempty, H nonempty",
            ));
        }
        if self.f.nrows() != n || self.f.ncols() == 0 || self.h.ncols() != n {
            return Err(FilterError::invalid("F must be n x m and H q x n"));
        }
        if self.r.shape() != (q, q) || self.x0_mean.len() != n || self.x0_cov.shape() != (n, n) {
            return Err(FilterError::invalid(
                "R, x0_mean and x0_cov have inconsistent shapes",
            ));
        }
        if !is_symmetric(&self.r) || self.r.clone().cholesky().is_none() {
            return Err(FilterError::invalid(
                "R must be symmetric positive definite",
            ));
        }
        if !is_symmetric(&self.x0_cov)
            || self
                .x0_cov
                .symmetric_eigenvalues()
                .iter()
                .any(|&l| l < -1e-12)
        {
            return Err(FilterError::invalid(
                "x0_cov must be symmetric positive semidefinite",
            ));
        }
        Ok(())
    }
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    (m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0)
}

/// Linear drift `A x`, constant diffusion `F`, observation `H x` with
/// per-sample covariance `R` over steps of `dt`.
pub fn build_linear_gaussian(
    spec: &LinearGaussianSpec,
    dt: f64,
) -> Result<(ProcessModel, MeasurementModel)> {
    spec.validate()?;
    let n = spec.state_dim();
    let a = spec.a.clone();
    let diffusion = if spec.f.iter().all(|&v| v == 0.0) {
        Diffusion::Zero
    } else {
        Diffusion::Constant(spec.f.clone())
    };
    let process = ProcessModel::new(
        n,
        spec.f.ncols(),
        move |x: &DVector<f64>, _t: f64| &a * x,
        diffusion,
    )?;
    let h = spec.h.clone();
    let measurement = MeasurementModel::from_covariance(
        spec.meas_dim(),
        move |x: &DVector<f64>, _t: f64| &h * x,
        &spec.r,
        dt,
    )?;
    Ok((process, measurement))
}

/// Twin experiment whose truth starts from the prior mean. Synthetic noise is
/// drawn per channel, so `R` must be diagonal here (the filters accept any R).
pub fn linear_gaussian_problem(spec: &LinearGaussianSpec, dt: f64) -> Result<TwinProblem> {
    let (model, measurement) = build_linear_gaussian(spec, dt)?;
    if spec
        .r
        .iter()
        .enumerate()
        .any(|(i, &v)| i % (spec.meas_dim() + 1) != 0 && v != 0.0)
    {
        return Err(FilterError::invalid("synthetic data needs a diagonal R"));
    }
    if spec
        .x0_cov
        .iter()
        .enumerate()
        .any(|(i, &v)| i % (spec.state_dim() + 1) != 0 && v != 0.0)
    {
        return Err(FilterError::invalid(
            "the ensemble prior needs a diagonal x0_cov",
        ));
    }
    let n = spec.state_dim();
    let channels = if n == 1 {
        vec!["x".to_string()]
    } else {
        (1..=n).map(|i| format!("x{i}")).collect()
    };
    Ok(TwinProblem {
        name: "linear-gaussian".into(),
        truth_model: model.clone(),
        filter_model: model,
        measurement,
        x0: spec.x0_mean.clone(),
        prior_mean: spec.x0_mean.clone(),
        prior_spread: spec.x0_cov.diagonal().map(|v| v.max(0.0).sqrt()),
        noise: NoiseLevel::Absolute(spec.r.diagonal().map(f64::sqrt)),
        channels,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanTrajectory {
    pub times: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
}

/// Exact filter for the Euler-discretised model: transition `I + A dt`,
/// process covariance `F Fᵀ dt`, prior `N(x0_mean, x0_cov)` one step before
/// the first measurement.
pub fn kalman_oracle(
    spec: &LinearGaussianSpec,
    series: &MeasurementSeries,
    dt: f64,
) -> Result<KalmanTrajectory> {
    spec.validate()?;
    if !(dt > 0.0) {
        return Err(FilterError::invalid("dt must be positive"));
    }
    if series.meas_dim() != spec.meas_dim() {
        return Err(FilterError::invalid("series dimension differs from H"));
    }
    let tol = 1e-9 * dt.max(1.0);
    if series
        .times()
        .windows(2)
        .any(|w| ((w[1] - w[0]) - dt).abs() > tol)
    {
        return Err(FilterError::invalid("series spacing does not match dt"));
    }
    let n = spec.state_dim();
    let phi = DMatrix::identity(n, n) + &spec.a * dt;
    let q = &spec.f * spec.f.transpose() * dt;
    let mut m = spec.x0_mean.clone();
    let mut p = spec.x0_cov.clone();
    let mut out = KalmanTrajectory {
        times: series.times().to_vec(),
        means: Vec::with_capacity(series.len()),
        covariances: Vec::with_capacity(series.len()),
    };
    for (i, &t) in series.times().iter().enumerate() {
        m = &phi * m;
        p = linalg::symmetrize(&(&phi * &p * phi.transpose() + &q));
        let s = linalg::symmetrize(&(&spec.h * &p * spec.h.transpose() + &spec.r));
        let gain = linalg::spd_right_solve(&(&p * spec.h.transpose()), &s)
            .ok_or_else(|| FilterError::numeric("innovation covariance is singular", t))?;
        m += &gain * (series.at(i) - &spec.h * &m);
        let i_kh = DMatrix::identity(n, n) - &gain * &spec.h;
        p = linalg::symmetrize(
            &(&i_kh * &p * i_kh.transpose() + &gain * &spec.r * gain.transpose()),
        );
        out.means.push(m.clone());
        out.covariances.push(p.clone());
    }
    Ok(out)
}
