//! Convergence sweeps: the filter error as a function of ensemble size or
//! step size, summarised by a log-log slope.
//!
//! Ensemble-size sweeps on the linear-Gaussian problem measure the ensemble
//! mean against the exact Kalman mean. On the other problems the reference is
//! a run with sixteen times the largest ensemble.
//!
//! Step-size sweeps are coupled: truth, measurement noise and every particle's
//! Brownian path live on one fine grid (a tenth of the smallest step, which is
//! also the reference run's step), and each coarse run consumes the sums of
//! the fine increments over its steps. The error is the time-averaged RMS
//! distance between the coarse run's mean and the reference mean at the
//! coarse times, so what is measured is the discretisation error of the
//! filter rather than Monte-Carlo noise.

use enks_core::problems::{kalman_oracle, NoiseLevel, TwinData, TwinProblem};
use enks_core::{
    initial_ensemble, make_schedule, particle_streams, Execution, FilterConfig, FilterKind,
    FilterRunner, RngStream, StreamPurpose, TimeGrid,
};
use nalgebra::{DMatrix, DVector};

use crate::config::{ExperimentConfig, ProblemId};
use crate::error::{HarnessError, Result};
use crate::experiment::{build_problem, linear_spec};
use crate::metrics::loglog_fit;

/// Fine steps per smallest swept step in a coupled step-size sweep.
pub const FINE_STEPS_PER_COARSE: usize = 10;
/// Reference ensemble size as a multiple of the largest swept size.
pub const REFERENCE_ENSEMBLE_FACTOR: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    EnsembleSize,
    TimeStep,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::EnsembleSize => "ensemble",
            SweepVariable::TimeStep => "dt",
        }
    }
}

impl std::str::FromStr for SweepVariable {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ensemble" | "N" | "n" => Ok(SweepVariable::EnsembleSize),
            "dt" | "timestep" => Ok(SweepVariable::TimeStep),
            other => Err(HarnessError::config(format!(
                "unknown sweep variable '{other}' (expected ensemble or dt)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergencePoint {
    pub value: f64,
    pub mean_error: f64,
    /// Sample standard deviation of the per-repeat errors.
    pub std_error: f64,
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub variable: SweepVariable,
    pub points: Vec<ConvergencePoint>,
    /// Least-squares slope of `log mean_error` against `log value`.
    pub slope: f64,
    pub intercept: f64,
}

/// Evaluates `error_fn(value, repeat)` for every value and repeat and fits the
/// log-log slope. Repeats form the outer loop.
pub fn sweep_with<F>(
    variable: SweepVariable,
    values: &[f64],
    repeats: usize,
    mut error_fn: F,
) -> Result<ConvergenceReport>
where
    F: FnMut(f64, usize) -> Result<f64>,
{
    if values.len() < 3 {
        return Err(HarnessError::config("a sweep needs at least three values"));
    }
    if repeats < 5 {
        return Err(HarnessError::config("a sweep needs at least five repeats"));
    }
    if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(HarnessError::config("sweep values must be positive"));
    }
    if variable == SweepVariable::EnsembleSize
        && values.iter().any(|v| v.fract() != 0.0 || *v < 2.0)
    {
        return Err(HarnessError::config(
            "ensemble sizes must be integers of at least 2",
        ));
    }
    let mut errors = vec![Vec::with_capacity(repeats); values.len()];
    for r in 0..repeats {
        for (i, &v) in values.iter().enumerate() {
            errors[i].push(error_fn(v, r)?);
        }
    }
    let points: Vec<ConvergencePoint> = values
        .iter()
        .zip(errors)
        .map(|(&value, errors)| {
            let n = errors.len() as f64;
            let mean = errors.iter().sum::<f64>() / n;
            let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
            ConvergencePoint {
                value,
                mean_error: mean,
                std_error: var.sqrt(),
                errors,
            }
        })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.value).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_error).collect();
    let (slope, intercept) = loglog_fit(&xs, &ys)?;
    Ok(ConvergenceReport {
        variable,
        points,
        slope,
        intercept,
    })
}

/// Time-averaged RMS distance between two mean trajectories.
pub fn trajectory_error(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_squared() / x.len() as f64)
        .sum();
    (sum / a.len() as f64).sqrt()
}

fn runner(
    cfg: &ExperimentConfig,
    problem: &TwinProblem,
    kind: FilterKind,
    ensemble: usize,
    dt: f64,
    seed: u64,
    noise_std: &DVector<f64>,
) -> Result<(FilterRunner, enks_core::MeasurementModel)> {
    let meas = problem.measurement.with_noise_std(noise_std, dt)?;
    let mut fcfg = FilterConfig::new(ensemble, dt, cfg.alpha, seed)?;
    fcfg.param_diffusion = cfg.param_diffusion;
    fcfg.clock = cfg.clock;
    let init = initial_ensemble(&problem.prior_mean, &problem.prior_spread, ensemble, seed)?;
    let r = DMatrix::from_diagonal(&noise_std.map(|s| s * s));
    let runner = FilterRunner::new(
        kind,
        fcfg,
        r,
        make_schedule(cfg.kappa)?,
        init,
        &meas,
        0.0,
        Execution::default(),
    )?;
    Ok((runner, meas))
}

/// Ensemble means at `t_1..t_M` of one filter run over `data`.
pub fn filter_means(
    cfg: &ExperimentConfig,
    problem: &TwinProblem,
    data: &TwinData,
    kind: FilterKind,
    ensemble: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    let (mut runner, meas) = runner(cfg, problem, kind, ensemble, cfg.dt, seed, &data.noise_std)?;
    (0..data.steps())
        .map(|i| {
            runner
                .assimilate(&problem.filter_model, &meas, &data.series.at(i))
                .map(|s| s.ensemble.mean())
                .map_err(|source| HarnessError::Step {
                    filter: kind.name().into(),
                    step: i + 1,
                    source,
                })
        })
        .collect()
}

/// Runs the sweep for the first filter in `cfg.filters`.
pub fn convergence_sweep(
    cfg: &ExperimentConfig,
    variable: SweepVariable,
    values: &[f64],
    repeats: usize,
) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let kind = cfg.filters[0];
    let problem = build_problem(cfg)?;
    match variable {
        SweepVariable::EnsembleSize => ensemble_sweep(cfg, &problem, kind, values, repeats),
        SweepVariable::TimeStep => step_sweep(cfg, &problem, kind, values, repeats),
    }
}

fn ensemble_sweep(
    cfg: &ExperimentConfig,
    problem: &TwinProblem,
    kind: FilterKind,
    values: &[f64],
    repeats: usize,
) -> Result<ConvergenceReport> {
    let data = problem.generate(cfg.dt, cfg.steps(), cfg.seed)?;
    let mut reference: Option<Vec<DVector<f64>>> = None;
    sweep_with(SweepVariable::EnsembleSize, values, repeats, |n, r| {
        if reference.is_none() {
            reference = Some(if cfg.problem == ProblemId::LinearGaussian {
                kalman_oracle(&linear_spec(cfg), &data.series, cfg.dt)?.means
            } else {
                let largest = values.iter().cloned().fold(0.0, f64::max) as usize;
                filter_means(
                    cfg,
                    problem,
                    &data,
                    kind,
                    largest * REFERENCE_ENSEMBLE_FACTOR,
                    cfg.seed.wrapping_add(1_000_003),
                )?
            });
        }
        let means = filter_means(
            cfg,
            problem,
            &data,
            kind,
            n as usize,
            cfg.seed.wrapping_add(r as u64),
        )?;
        Ok(trajectory_error(&means, reference.as_ref().unwrap()))
    })
}

/// Integer ratio `coarse / fine`, or an error if `coarse` is not a multiple.
fn multiple_of(coarse: f64, fine: f64, what: &str) -> Result<usize> {
    let k = (coarse / fine).round();
    if k < 1.0 || ((coarse / fine) - k).abs() > 1e-6 {
        return Err(HarnessError::config(format!(
            "{what} {coarse} is not a multiple of {fine}"
        )));
    }
    Ok(k as usize)
}

/// One repeat's shared randomness on the fine grid.
struct FineWorld {
    dt: f64,
    steps: usize,
    truth: DMatrix<f64>,
    /// ν: noise intensity per unit sqrt-time of every measurement channel.
    nu: DVector<f64>,
    seed: u64,
}

impl FineWorld {
    fn new(
        problem: &TwinProblem,
        dt: f64,
        steps: usize,
        seed: u64,
        nu: DVector<f64>,
    ) -> Result<Self> {
        let grid = TimeGrid::uniform(0.0, dt, steps)?;
        let mut stream = RngStream::for_purpose(seed, StreamPurpose::Truth, 0);
        let truth =
            enks_core::simulate_truth(&problem.truth_model, &problem.x0, &grid, &mut stream)?;
        Ok(FineWorld {
            dt,
            steps,
            truth,
            nu,
            seed,
        })
    }

    /// Runs `kind` at `ratio` fine steps per filter step, returning the means
    /// at every filter step.
    fn run(
        &self,
        cfg: &ExperimentConfig,
        problem: &TwinProblem,
        kind: FilterKind,
        ratio: usize,
    ) -> Result<Vec<DVector<f64>>> {
        let dt = self.dt * ratio as f64;
        let steps = self.steps / ratio;
        let q = problem.measurement.meas_dim();
        let m = problem.filter_model.noise_dim();
        let n = cfg.ensemble;
        let noise_std = self.nu.map(|v| v * dt.sqrt());
        let (mut runner, meas) = runner(cfg, problem, kind, n, dt, self.seed, &noise_std)?;
        let mut meas_stream = RngStream::for_purpose(self.seed, StreamPurpose::Measurement, 0);
        let mut particle = particle_streams(self.seed, StreamPurpose::Prediction, n);
        let sd = self.dt.sqrt();
        let mut means = Vec::with_capacity(steps);
        for i in 0..steps {
            let mut eps = DVector::zeros(q);
            let mut inc = DMatrix::zeros(m, n);
            for _ in 0..ratio {
                eps += meas_stream.normal_vector(q, sd);
                for (j, s) in particle.iter_mut().enumerate() {
                    let mut col = inc.column_mut(j);
                    col += s.normal_vector(m, sd);
                }
            }
            let fine = (i + 1) * ratio;
            let t = fine as f64 * self.dt;
            let y = meas.observe(&self.truth.column(fine).into_owned(), t)
                + self.nu.component_mul(&eps);
            let state = runner
                .assimilate_with_increments(&problem.filter_model, &meas, &y, &inc)
                .map_err(|source| HarnessError::Step {
                    filter: kind.name().into(),
                    step: i + 1,
                    source,
                })?;
            means.push(state.ensemble.mean());
        }
        Ok(means)
    }
}

fn step_sweep(
    cfg: &ExperimentConfig,
    problem: &TwinProblem,
    kind: FilterKind,
    values: &[f64],
    repeats: usize,
) -> Result<ConvergenceReport> {
    let finest = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let fine_dt = finest / FINE_STEPS_PER_COARSE as f64;
    let fine_steps = multiple_of(cfg.horizon, fine_dt, "horizon")?;
    let ratios = values
        .iter()
        .map(|&v| {
            multiple_of(v, fine_dt, "step")?;
            multiple_of(cfg.horizon, v, "horizon")?;
            Ok((v, multiple_of(v, fine_dt, "step")?))
        })
        .collect::<Result<Vec<_>>>()?;
    let nu = match &problem.noise {
        NoiseLevel::Absolute(s) => s / cfg.dt.sqrt(),
        NoiseLevel::RelativeToSignal(_) => {
            problem.generate(cfg.dt, cfg.steps(), cfg.seed)?.noise_std / cfg.dt.sqrt()
        }
    };
    let mut cached: Option<(usize, FineWorld, Vec<DVector<f64>>)> = None;
    sweep_with(SweepVariable::TimeStep, values, repeats, |v, r| {
        if cached.as_ref().map(|c| c.0) != Some(r) {
            let world = FineWorld::new(
                problem,
                fine_dt,
                fine_steps,
                cfg.seed.wrapping_add(r as u64),
                nu.clone(),
            )?;
            let reference = world.run(cfg, problem, kind, 1)?;
            cached = Some((r, world, reference));
        }
        let (_, world, reference) = cached.as_ref().unwrap();
        let ratio = ratios.iter().find(|(x, _)| *x == v).map(|p| p.1).unwrap();
        let coarse = world.run(cfg, problem, kind, ratio)?;
        let matched: Vec<DVector<f64>> = (1..=coarse.len())
            .map(|i| reference[i * ratio - 1].clone())
            .collect();
        Ok(trajectory_error(&coarse, &matched))
    })
}
