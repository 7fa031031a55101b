//! Experiment configuration.
//!
//! Config files are flat sections of `key = value` lines:
//!
//! ```text
//! # Population model, filters compared head to head
//! [experiment]
//! problem  = population
//! filters  = enks, enkf
//! ensemble = 1000
//! dt       = 0.1
//! horizon  = 5
//! seed     = 3
//!
//! [model]
//! proc_noise = 0.2
//! ```
//!
//! `#` starts a comment. Keys before the first header belong to
//! `[experiment]`. Unset keys take the problem's defaults, and every key can
//! be overridden from the command line.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use enks_core::{FilterKind, GainClock, DEFAULT_ALPHA, DEFAULT_KAPPA};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemId {
    Frame50,
    Frame20Damaged,
    Pendulum,
    Population,
    LinearGaussian,
}

impl ProblemId {
    pub const ALL: [ProblemId; 5] = [
        ProblemId::Frame50,
        ProblemId::Frame20Damaged,
        ProblemId::Pendulum,
        ProblemId::Population,
        ProblemId::LinearGaussian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemId::Frame50 => "frame50",
            ProblemId::Frame20Damaged => "frame20-damaged",
            ProblemId::Pendulum => "pendulum",
            ProblemId::Population => "population",
            ProblemId::LinearGaussian => "linear-gaussian",
        }
    }

    /// `(N, dt, T)` used when the config leaves them unset.
    pub fn defaults(self) -> (usize, f64, f64) {
        match self {
            ProblemId::Frame50 => (800, 0.01, 20.0),
            ProblemId::Frame20Damaged => (300, 0.01, 20.0),
            ProblemId::Pendulum => (600, 0.01, 20.0),
            ProblemId::Population => (1000, 0.1, 5.0),
            ProblemId::LinearGaussian => (2000, 0.01, 10.0),
        }
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemId {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        ProblemId::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = ProblemId::ALL.iter().map(|p| p.name()).collect();
                HarnessError::config(format!(
                    "unknown problem '{s}' (expected one of {})",
                    known.join(", ")
                ))
            })
    }
}

/// Problem-specific knobs; `None` keeps the builder's default.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelOverrides {
    /// Diffusion on the velocity channels (frames, pendulum) or the state
    /// (population, linear-Gaussian).
    pub proc_noise: Option<f64>,
    /// Absolute per-sample measurement noise std, replacing the default level.
    pub meas_noise: Option<f64>,
    /// Measurement noise as a fraction of the clean signal's std.
    pub noise_fraction: Option<f64>,
    /// Relative prior spread of parameter channels, or the absolute prior std
    /// for the population and linear-Gaussian problems.
    pub prior_spread: Option<f64>,
    /// Relative offset of the pendulum's prior parameters from the truth.
    pub param_offset: Option<f64>,
    pub dof: Option<usize>,
    pub damaged_storey: Option<usize>,
    pub damaged_k: Option<f64>,
    /// The forcing draw; otherwise drawn from the seed.
    pub xi: Option<f64>,
    pub x0: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub problem: Option<String>,
    pub filters: Vec<String>,
    pub ensemble: Option<usize>,
    pub dt: Option<f64>,
    pub alpha: Option<f64>,
    pub kappa: Option<usize>,
    pub seed: Option<u64>,
    pub horizon: Option<f64>,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub clock: Option<String>,
    pub param_diffusion: Option<f64>,
    pub charts: Vec<String>,
    pub model: ModelOverrides,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemId,
    pub filters: Vec<FilterKind>,
    pub ensemble: usize,
    pub dt: f64,
    pub alpha: f64,
    pub kappa: usize,
    pub seed: u64,
    pub horizon: f64,
    pub out: Option<PathBuf>,
    /// Directory of a dataset written by `simulate`, used instead of
    /// generating one.
    pub data: Option<PathBuf>,
    pub clock: GainClock,
    pub param_diffusion: f64,
    /// Channels to chart; empty means the problem's default selection.
    pub charts: Vec<String>,
    pub model: ModelOverrides,
}

impl ExperimentConfig {
    /// Defaults for `problem` with every filter selected.
    pub fn for_problem(problem: ProblemId) -> Self {
        let (ensemble, dt, horizon) = problem.defaults();
        ExperimentConfig {
            problem,
            filters: FilterKind::ALL.to_vec(),
            ensemble,
            dt,
            alpha: DEFAULT_ALPHA,
            kappa: DEFAULT_KAPPA,
            seed: 0,
            horizon,
            out: None,
            data: None,
            clock: GainClock::Local,
            param_diffusion: 0.01,
            charts: Vec::new(),
            model: ModelOverrides::default(),
        }
    }

    /// Number of filter steps covering the horizon.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.filters.is_empty() {
            return Err(HarnessError::config("no filter selected"));
        }
        if self.ensemble < 2 {
            return Err(HarnessError::config("ensemble must be at least 2"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(HarnessError::config("dt must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(HarnessError::config("alpha must lie in (0, 1)"));
        }
        if self.kappa < 1 {
            return Err(HarnessError::config("kappa must be at least 1"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) || self.steps() == 0 {
            return Err(HarnessError::config("horizon must cover at least one step"));
        }
        if ((self.horizon / self.dt) - self.steps() as f64).abs() > 1e-6 {
            return Err(HarnessError::config(
                "horizon must be a whole number of steps",
            ));
        }
        if !(self.param_diffusion >= 0.0) {
            return Err(HarnessError::config("param_diffusion must be nonnegative"));
        }
        Ok(())
    }
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        let mut section = "experiment".to_string();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| HarnessError::config(format!("line {}: {msg}", lineno + 1));
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| at("unterminated section header".into()))?
                    .trim();
                if name != "experiment" && name != "model" {
                    return Err(at(format!("unknown section [{name}]")));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected 'key = value', got '{line}'")))?;
            raw.set(&section, key.trim(), value.trim())
                .map_err(|e| match e {
                    HarnessError::Config(msg) => at(msg),
                    other => other,
                })?;
        }
        Ok(raw)
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        match (section, key) {
            ("experiment", "problem") => self.problem = Some(value.to_string()),
            ("experiment", "filters" | "filter") => self.filters = list(value),
            ("experiment", "ensemble") => self.ensemble = Some(number(key, value)?),
            ("experiment", "dt") => self.dt = Some(number(key, value)?),
            ("experiment", "alpha") => self.alpha = Some(number(key, value)?),
            ("experiment", "kappa") => self.kappa = Some(number(key, value)?),
            ("experiment", "seed") => self.seed = Some(number(key, value)?),
            ("experiment", "horizon") => self.horizon = Some(number(key, value)?),
            ("experiment", "out") => self.out = Some(PathBuf::from(value)),
            ("experiment", "data") => self.data = Some(PathBuf::from(value)),
            ("experiment", "clock") => self.clock = Some(value.to_string()),
            ("experiment", "param_diffusion") => self.param_diffusion = Some(number(key, value)?),
            ("experiment", "charts") => self.charts = list(value),
            ("model", "proc_noise") => self.model.proc_noise = Some(number(key, value)?),
            ("model", "meas_noise") => self.model.meas_noise = Some(number(key, value)?),
            ("model", "noise_fraction") => self.model.noise_fraction = Some(number(key, value)?),
            ("model", "prior_spread") => self.model.prior_spread = Some(number(key, value)?),
            ("model", "param_offset") => self.model.param_offset = Some(number(key, value)?),
            ("model", "dof") => self.model.dof = Some(number(key, value)?),
            ("model", "damaged_storey") => self.model.damaged_storey = Some(number(key, value)?),
            ("model", "damaged_k") => self.model.damaged_k = Some(number(key, value)?),
            ("model", "xi") => self.model.xi = Some(number(key, value)?),
            ("model", "x0") => self.model.x0 = Some(number(key, value)?),
            _ => {
                return Err(HarnessError::config(format!(
                    "unknown key '{key}' in [{section}]"
                )))
            }
        }
        Ok(())
    }

    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let problem: ProblemId = self
            .problem
            .as_deref()
            .ok_or_else(|| HarnessError::config("no problem selected"))?
            .parse()?;
        let mut cfg = ExperimentConfig::for_problem(problem);
        if !self.filters.is_empty() {
            cfg.filters = self
                .filters
                .iter()
                .map(|f| {
                    f.parse::<FilterKind>()
                        .map_err(|e| HarnessError::config(e.to_string()))
                })
                .collect::<Result<_>>()?;
            let mut seen = Vec::new();
            cfg.filters.retain(|f| {
                let fresh = !seen.contains(f);
                seen.push(*f);
                fresh
            });
        }
        if let Some(v) = self.ensemble {
            cfg.ensemble = v;
        }
        if let Some(v) = self.dt {
            cfg.dt = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.kappa {
            cfg.kappa = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.horizon {
            cfg.horizon = v;
        }
        if let Some(v) = self.param_diffusion {
            cfg.param_diffusion = v;
        }
        cfg.clock = match self.clock.as_deref() {
            None | Some("local") => GainClock::Local,
            Some("absolute") => GainClock::Absolute,
            Some(other) => {
                return Err(HarnessError::config(format!(
                    "unknown clock '{other}' (expected local or absolute)"
                )))
            }
        };
        cfg.out = self.out.clone();
        cfg.data = self.data.clone();
        cfg.charts = self.charts.clone();
        cfg.model = self.model.clone();
        cfg.validate()?;
        Ok(cfg)
    }
}

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn number<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| HarnessError::config(format!("'{value}' is not a valid value for {key}")))
}
