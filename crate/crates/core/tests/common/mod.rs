#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Literal evaluation of the gain with replicated mean matrices and an
/// explicit inverse, independent of the library's expanded form:
///
/// ```text
/// G = (1/N) [ (Φ − Φ̂)(Hᵀ t − Ĥ_lagᵀ t_lag − ΔĤᵀ t) + (Φ̂ t − Φ̂_lag t_lag)(H − Ĥ)ᵀ ]
///       · [ α (H − Ĥ)(H − Ĥ)ᵀ/(N − 1) + (1 − α) σᵀσ ]⁻¹,    ΔĤ = Ĥ − Ĥ_lag
/// ```
pub struct OracleInputs<'a> {
    pub phi: &'a DMatrix<f64>,
    pub h: &'a DMatrix<f64>,
    pub lag_state_mean: &'a DVector<f64>,
    pub lag_meas_mean: &'a DVector<f64>,
    pub t: f64,
    pub t_lag: f64,
    pub alpha: f64,
    pub sigma: &'a DMatrix<f64>,
}

fn replicate(v: &DVector<f64>, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(v.len(), n, |i, _| v[i])
}

fn plain_mean(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(m.nrows(), |i, _| {
        m.row(i).iter().sum::<f64>() / m.ncols() as f64
    })
}

pub fn oracle_gain(x: &OracleInputs<'_>) -> DMatrix<f64> {
    let n = x.phi.ncols();
    let phi_hat = replicate(&plain_mean(x.phi), n);
    let h_hat = replicate(&plain_mean(x.h), n);
    let phi_lag = replicate(x.lag_state_mean, n);
    let h_lag = replicate(x.lag_meas_mean, n);
    let delta_h = &h_hat - &h_lag;
    let first = (x.phi - &phi_hat)
        * (x.h.transpose() * x.t - h_lag.transpose() * x.t_lag - delta_h.transpose() * x.t);
    let second = (&phi_hat * x.t - &phi_lag * x.t_lag) * (x.h - &h_hat).transpose();
    let numerator = (first + second) / n as f64;
    let s = (x.h - &h_hat) * (x.h - &h_hat).transpose() / (n as f64 - 1.0);
    let d = s * x.alpha + x.sigma.transpose() * x.sigma * (1.0 - x.alpha);
    numerator * d.try_inverse().expect("oracle denominator invertible")
}

/// Small deterministic pseudo-random fill so oracle cases need no RNG crate.
pub fn filled(rows: usize, cols: usize, salt: u64) -> DMatrix<f64> {
    let mut state = salt
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    DMatrix::from_fn(rows, cols, |_, _| {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    })
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

use enks_core::problems::{TwinData, TwinProblem};
use enks_core::{
    initial_ensemble, make_schedule, Execution, FilterConfig, FilterKind, FilterRunner,
};

/// Runs `kind` over the whole series; returns the analysis mean and spread
/// after every step plus the final-step mean innovation norm.
pub struct FilterRun {
    pub means: Vec<DVector<f64>>,
    pub stds: Vec<DVector<f64>>,
    pub final_innovation: f64,
}

pub fn run_filter(
    problem: &TwinProblem,
    data: &TwinData,
    kind: FilterKind,
    n: usize,
    dt: f64,
    seed: u64,
    kappa: usize,
) -> enks_core::Result<FilterRun> {
    let meas = problem.filter_measurement(data, dt)?;
    let cfg = FilterConfig::new(n, dt, enks_core::DEFAULT_ALPHA, seed)?;
    let init = initial_ensemble(&problem.prior_mean, &problem.prior_spread, n, seed)?;
    let mut runner = FilterRunner::new(
        kind,
        cfg,
        problem.observation_covariance(data),
        make_schedule(kappa)?,
        init,
        &meas,
        0.0,
        Execution::default(),
    )?;
    let mut out = FilterRun {
        means: Vec::new(),
        stds: Vec::new(),
        final_innovation: f64::NAN,
    };
    for i in 0..data.steps() {
        let y = data.series.at(i);
        let state = runner.assimilate(&problem.filter_model, &meas, &y)?;
        out.means.push(state.ensemble.mean());
        out.stds.push(state.ensemble.std_dev());
        if i + 1 == data.steps() {
            let h = meas.observe_ensemble(&state.ensemble, state.t_curr, Execution::default())?;
            let hbar = enks_core::ensemble_mean(&h)?;
            out.final_innovation = (y - hbar).norm();
        }
    }
    Ok(out)
}

pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}
