//! Forced nonlinear oscillator whose base reaction, not its motion, is
//! measured: `ẍ + c ẋ + k sin x = r(t) + f Ḃ` observed through
//! `y = c ẋ + k sin x`. The measurement is nonlinear in both the motion and
//! the unknown parameters.

use nalgebra::{DMatrix, DVector};

use super::{NoiseLevel, TwinProblem};
use crate::error::{FilterError, Result};
use crate::sde::{Diffusion, MeasurementModel, ProcessModel};

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumSpec {
    pub c: f64,
    pub k: f64,
    pub forcing_amp: f64,
    pub forcing_decay: f64,
    pub forcing_freq: f64,
    pub proc_noise: f64,
    pub xi: f64,
}

impl Default for PendulumSpec {
    fn default() -> Self {
        let forcing_amp = 5.0;
        PendulumSpec {
            c: 1.0,
            k: 10.0,
            forcing_amp,
            forcing_decay: 0.01,
            forcing_freq: 5.0,
            proc_noise: 0.01 * forcing_amp,
            xi: 1.0,
        }
    }
}

impl PendulumSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !(self.k > 0.0) || !self.c.is_finite() || !self.k.is_finite() {
            return Err(FilterError::invalid("pendulum c and k must be positive"));
        }
        if !(self.proc_noise >= 0.0) || !self.forcing_amp.is_finite() || !self.xi.is_finite() {
            return Err(FilterError::invalid(
                "forcing and noise settings must be finite, noise nonnegative",
            ));
        }
        Ok(())
    }

    pub fn forcing(&self, t: f64) -> f64 {
        self.forcing_amp
            * (-self.forcing_decay * t).exp()
            * self.xi.abs()
            * (self.forcing_freq * t).cos()
    }
}

/// State `(x, ẋ, k, c)`; `param_diffusion` spreads the last two channels.
pub fn build_pendulum(
    spec: &PendulumSpec,
    param_diffusion: f64,
) -> Result<(ProcessModel, MeasurementModel)> {
    spec.validate()?;
    if !(param_diffusion >= 0.0) {
        return Err(FilterError::invalid("param_diffusion must be nonnegative"));
    }
    let s = spec.clone();
    let drift = move |x: &DVector<f64>, t: f64| {
        let (pos, vel, k, c) = (x[0], x[1], x[2], x[3]);
        DVector::from_row_slice(&[vel, s.forcing(t) - c * vel - k * pos.sin(), 0.0, 0.0])
    };
    let diag = DVector::from_row_slice(&[0.0, spec.proc_noise, param_diffusion, param_diffusion]);
    let process = ProcessModel::new(4, 4, drift, Diffusion::Diagonal(diag))?;
    let h = |x: &DVector<f64>, _t: f64| DVector::from_element(1, x[3] * x[1] + x[2] * x[0].sin());
    let measurement = MeasurementModel::new(1, h, DMatrix::identity(1, 1), 1.0)?;
    Ok((process, measurement))
}

/// Twin experiment starting at rest with the prior parameters offset from the
/// truth by `param_offset` (relative) and spread `param_spread` (relative).
pub fn pendulum_problem(
    spec: &PendulumSpec,
    param_offset: f64,
    param_spread: f64,
    param_diffusion: f64,
) -> Result<TwinProblem> {
    let (truth_model, measurement) = build_pendulum(spec, 0.0)?;
    let (filter_model, _) = build_pendulum(spec, param_diffusion)?;
    let scale = 1.0 + param_offset;
    Ok(TwinProblem {
        name: "pendulum".into(),
        truth_model,
        filter_model,
        measurement,
        x0: DVector::from_row_slice(&[0.0, 0.0, spec.k, spec.c]),
        prior_mean: DVector::from_row_slice(&[0.0, 0.0, spec.k * scale, spec.c * scale]),
        prior_spread: DVector::from_row_slice(&[
            1e-3,
            1e-3,
            spec.k * param_spread,
            spec.c * param_spread,
        ]),
        noise: NoiseLevel::RelativeToSignal(0.01),
        channels: ["x", "v", "k", "c"].map(String::from).to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn equilibrium_without_forcing() {
        let spec = PendulumSpec {
            forcing_amp: 0.0,
            ..PendulumSpec::default()
        };
        let (p, _) = build_pendulum(&spec, 0.01).unwrap();
        let b = p.drift(&DVector::from_row_slice(&[0.0, 0.0, 10.0, 1.0]), 2.0);
        assert!(b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reaction_measurement() {
        let (_, m) = build_pendulum(&PendulumSpec::default(), 0.0).unwrap();
        let y = m.observe(&DVector::from_row_slice(&[FRAC_PI_2, 1.0, 2.0, 3.0]), 0.0);
        assert_eq!(y[0], 5.0);
    }

    #[test]
    fn drift_uses_state_parameters() {
        let spec = PendulumSpec {
            xi: 0.0,
            ..PendulumSpec::default()
        };
        let (p, _) = build_pendulum(&spec, 0.0).unwrap();
        let b = p.drift(&DVector::from_row_slice(&[FRAC_PI_2, 2.0, 4.0, 0.5]), 0.0);
        assert_eq!(b, DVector::from_row_slice(&[2.0, -5.0, 0.0, 0.0]));
    }

    #[test]
    fn forcing_profile() {
        let spec = PendulumSpec {
            xi: -2.0,
            ..PendulumSpec::default()
        };
        let t = 3.0;
        assert!((spec.forcing(t) - 10.0 * (-0.03f64).exp() * 15.0f64.cos()).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_parameters() {
        assert!(PendulumSpec {
            c: 0.0,
            ..PendulumSpec::default()
        }
        .validate()
        .is_err());
        assert!(PendulumSpec {
            k: -1.0,
            ..PendulumSpec::default()
        }
        .validate()
        .is_err());
    }
}
