use thiserror::Error;

pub type Result<T> = std::result::Result<T, FilterError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A model evaluation or linear solve produced a non-finite or singular result.
    #[error("numeric failure at t = {time}{}{}: {what}",
        .particle.map(|p| format!(", particle {p}")).unwrap_or_default(),
        .iteration.map(|k| format!(", inner iteration {k}")).unwrap_or_default())]
    NumericFailure {
        what: String,
        time: f64,
        particle: Option<usize>,
        iteration: Option<usize>,
    },
}

impl FilterError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        FilterError::InvalidArgument(msg.into())
    }

    pub(crate) fn numeric(what: impl Into<String>, time: f64) -> Self {
        FilterError::NumericFailure {
            what: what.into(),
            time,
            particle: None,
            iteration: None,
        }
    }

    pub(crate) fn with_particle(self, index: usize) -> Self {
        match self {
            FilterError::NumericFailure {
                what,
                time,
                iteration,
                ..
            } => FilterError::NumericFailure {
                what,
                time,
                particle: Some(index),
                iteration,
            },
            other => other,
        }
    }

    pub(crate) fn with_iteration(self, k: usize) -> Self {
        match self {
            FilterError::NumericFailure {
                what,
                time,
                particle,
                ..
            } => FilterError::NumericFailure {
                what,
                time,
                particle,
                iteration: Some(k),
            },
            other => other,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, FilterError::NumericFailure { .. })
    }
}
