//! Multi-storey shear frame with uncertain stiffness and damping.
//!
//! The equation of motion `M Ü + C U̇ + K U = R(t)` (unit storey masses) is
//! reduced to first order and augmented with the per-storey parameters, so the
//! state is `[U, U̇, k, c]` of length `4·dof`. The stiffness and damping
//! matrices are rebuilt from the current parameter states on every drift
//! evaluation, which is what makes the identification problem nonlinear.

use nalgebra::{DMatrix, DVector};

use super::{relative_spread, NoiseLevel, TwinProblem};
use crate::error::{FilterError, Result};
use crate::sde::{Diffusion, MeasurementModel, ProcessModel};

#[derive(Debug, Clone, PartialEq)]
pub struct ShearFrameSpec {
    pub dof: usize,
    pub k_ref: Vec<f64>,
    pub c_ref: Vec<f64>,
    pub forcing_amp: f64,
    pub forcing_decay: f64,
    pub forcing_freq: f64,
    /// Diffusion intensity on the velocity channels.
    pub proc_noise: f64,
    /// Zero-based storeys whose velocity is measured.
    pub measured: Vec<usize>,
    /// The forcing draw `ξ`, fixed for the whole run.
    pub xi: f64,
}

impl ShearFrameSpec {
    /// Every storey with stiffness `k` and damping `c`, all velocities
    /// measured, forcing amplitude 500 and process noise 1% of it.
    pub fn uniform(dof: usize, k: f64, c: f64) -> Self {
        let forcing_amp = 500.0;
        ShearFrameSpec {
            dof,
            k_ref: vec![k; dof],
            c_ref: vec![c; dof],
            forcing_amp,
            forcing_decay: 1.0,
            forcing_freq: 5.0,
            proc_noise: 0.01 * forcing_amp,
            measured: (0..dof).collect(),
            xi: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dof == 0 {
            return Err(FilterError::invalid(
                "a shear frame needs at least one storey",
            ));
        }
        if self.k_ref.len() != self.dof || self.c_ref.len() != self.dof {
            return Err(FilterError::invalid(
                "k_ref and c_ref must have one entry per storey",
            ));
        }
        if self
            .k_ref
            .iter()
            .chain(&self.c_ref)
            .any(|p| !(*p > 0.0) || !p.is_finite())
        {
            return Err(FilterError::invalid(
                "stiffness and damping must be positive",
            ));
        }
        if !(self.proc_noise >= 0.0) || !self.forcing_amp.is_finite() || !self.xi.is_finite() {
            return Err(FilterError::invalid(
                "forcing and noise settings must be finite, noise nonnegative",
            ));
        }
        if self.measured.is_empty() || self.measured.iter().any(|&i| i >= self.dof) {
            return Err(FilterError::invalid(
                "measured storeys must be a nonempty subset of 0..dof",
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

    /// True augmented state at rest: zero motion, reference parameters.
    pub fn rest_state(&self) -> DVector<f64> {
        let d = self.dof;
        let mut x = DVector::zeros(4 * d);
        for i in 0..d {
            x[2 * d + i] = self.k_ref[i];
            x[3 * d + i] = self.c_ref[i];
        }
        x
    }
}

/// `[K_1+K_2, −K_2; −K_2, K_2+K_3, −K_3; …; −K_d, K_d]`.
pub fn tridiagonal_stiffness(params: &[f64]) -> Result<DMatrix<f64>> {
    if params.is_empty() {
        return Err(FilterError::invalid("need at least one storey parameter"));
    }
    if params.iter().any(|p| !(*p > 0.0)) {
        return Err(FilterError::invalid("storey parameters must be positive"));
    }
    let d = params.len();
    let mut k = DMatrix::zeros(d, d);
    for i in 0..d {
        k[(i, i)] = params[i] + params.get(i + 1).copied().unwrap_or(0.0);
        if i + 1 < d {
            k[(i, i + 1)] = -params[i + 1];
            k[(i + 1, i)] = -params[i + 1];
        }
    }
    Ok(k)
}

/// `(P u)_i = p_i (u_i − u_{i−1}) + p_{i+1} (u_i − u_{i+1})` with `u_0 = 0`
/// and no storey above the top: the tridiagonal product without forming it.
fn chain_product(p: &[f64], u: &[f64], out: &mut [f64]) {
    let d = u.len();
    for i in 0..d {
        let below = if i == 0 { 0.0 } else { u[i - 1] };
        let mut v = p[i] * (u[i] - below);
        if i + 1 < d {
            v += p[i + 1] * (u[i] - u[i + 1]);
        }
        out[i] = v;
    }
}

/// Augmented frame model. `param_diffusion` is the artificial diffusion on the
/// stiffness and damping channels (zero for the truth model).
pub fn build_shear_frame(
    spec: &ShearFrameSpec,
    param_diffusion: f64,
) -> Result<(ProcessModel, MeasurementModel)> {
    spec.validate()?;
    if !(param_diffusion >= 0.0) {
        return Err(FilterError::invalid("param_diffusion must be nonnegative"));
    }
    let d = spec.dof;
    let n = 4 * d;
    let forcing = spec.clone();
    let drift = move |x: &DVector<f64>, t: f64| {
        let s = x.as_slice();
        let (u, rest) = s.split_at(d);
        let (v, rest) = rest.split_at(d);
        let (k, c) = rest.split_at(d);
        let mut ku = vec![0.0; d];
        let mut cv = vec![0.0; d];
        chain_product(k, u, &mut ku);
        chain_product(c, v, &mut cv);
        let r = forcing.forcing(t);
        let mut out = DVector::zeros(n);
        for i in 0..d {
            out[i] = v[i];
            out[d + i] = r - cv[i] - ku[i];
        }
        out
    };
    let mut diag = DVector::zeros(n);
    diag.rows_mut(d, d).fill(spec.proc_noise);
    diag.rows_mut(2 * d, 2 * d).fill(param_diffusion);
    let process = ProcessModel::new(n, n, drift, Diffusion::Diagonal(diag))?;

    let measured = spec.measured.clone();
    let q = measured.len();
    let h = move |x: &DVector<f64>, _t: f64| {
        DVector::from_iterator(q, measured.iter().map(|&i| x[d + i]))
    };
    let measurement = MeasurementModel::new(q, h, DMatrix::identity(q, q), 1.0)?;
    Ok((process, measurement))
}

/// The frame with storey `damaged_storey` (one-based) lowered to `damaged_k`.
pub fn build_damaged_frame(
    spec: &ShearFrameSpec,
    damaged_storey: usize,
    damaged_k: f64,
    param_diffusion: f64,
) -> Result<(ProcessModel, MeasurementModel)> {
    build_shear_frame(&damage(spec, damaged_storey, damaged_k)?, param_diffusion)
}

fn damage(spec: &ShearFrameSpec, damaged_storey: usize, damaged_k: f64) -> Result<ShearFrameSpec> {
    if damaged_storey == 0 || damaged_storey > spec.dof {
        return Err(FilterError::invalid(format!(
            "damaged storey {damaged_storey} is outside 1..={}",
            spec.dof
        )));
    }
    let mut out = spec.clone();
    out.k_ref[damaged_storey - 1] = damaged_k;
    Ok(out)
}

/// Twin experiment on a frame whose truth is `spec`; the filter's prior is
/// centred on the nominal (design) parameters `nominal_k`, `nominal_c` with
/// relative spread `param_spread`.
pub fn frame_problem(
    name: &str,
    spec: &ShearFrameSpec,
    nominal_k: f64,
    nominal_c: f64,
    param_spread: f64,
    param_diffusion: f64,
) -> Result<TwinProblem> {
    let (truth_model, measurement) = build_shear_frame(spec, 0.0)?;
    let (filter_model, _) = build_shear_frame(spec, param_diffusion)?;
    let d = spec.dof;
    let x0 = spec.rest_state();
    let mut prior_mean = DVector::zeros(4 * d);
    prior_mean.rows_mut(2 * d, d).fill(nominal_k);
    prior_mean.rows_mut(3 * d, d).fill(nominal_c);
    let mut prior_spread = relative_spread(&prior_mean, param_spread, 0.0);
    prior_spread.rows_mut(0, 2 * d).fill(1e-3);
    let channels = ["u", "v", "k", "c"]
        .iter()
        .flat_map(|p| (1..=d).map(move |i| format!("{p}{i}")))
        .collect();
    Ok(TwinProblem {
        name: name.to_string(),
        truth_model,
        filter_model,
        measurement,
        x0,
        prior_mean,
        prior_spread,
        noise: NoiseLevel::RelativeToSignal(0.01),
        channels,
    })
}

/// The damaged variant of [`frame_problem`].
#[allow(clippy::too_many_arguments)]
pub fn damaged_frame_problem(
    name: &str,
    spec: &ShearFrameSpec,
    damaged_storey: usize,
    damaged_k: f64,
    nominal_k: f64,
    nominal_c: f64,
    param_spread: f64,
    param_diffusion: f64,
) -> Result<TwinProblem> {
    let damaged = damage(spec, damaged_storey, damaged_k)?;
    frame_problem(
        name,
        &damaged,
        nominal_k,
        nominal_c,
        param_spread,
        param_diffusion,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stiffness_patterns() {
        assert_eq!(
            tridiagonal_stiffness(&[5.0]).unwrap(),
            DMatrix::from_element(1, 1, 5.0)
        );
        assert_eq!(
            tridiagonal_stiffness(&[2.0, 3.0]).unwrap(),
            DMatrix::from_row_slice(2, 2, &[5.0, -3.0, -3.0, 3.0])
        );
        let k = tridiagonal_stiffness(&[100.0; 50]).unwrap();
        for i in 0..49 {
            assert_eq!(k[(i, i)], 200.0);
            assert_eq!(k[(i, i + 1)], -100.0);
            assert_eq!(k[(i + 1, i)], -100.0);
        }
        assert_eq!(k[(49, 49)], 100.0);
        assert_eq!(k[(0, 2)], 0.0);
        assert!(tridiagonal_stiffness(&[1.0, 0.0]).is_err());
        assert!(tridiagonal_stiffness(&[]).is_err());
    }

    #[test]
    fn chain_product_matches_matrix() {
        let p = [3.0, 1.5, 2.0, 4.0];
        let u = [0.1, -0.4, 0.3, 0.9];
        let mut out = [0.0; 4];
        chain_product(&p, &u, &mut out);
        let want = tridiagonal_stiffness(&p).unwrap() * DVector::from_row_slice(&u);
        for i in 0..4 {
            assert!((out[i] - want[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn augmented_dimensions() {
        let (p, m) = build_shear_frame(&ShearFrameSpec::uniform(50, 100.0, 5.0), 0.01).unwrap();
        assert_eq!(p.state_dim(), 200);
        assert_eq!(m.meas_dim(), 50);
        let (p, _) = build_shear_frame(&ShearFrameSpec::uniform(20, 100.0, 5.0), 0.01).unwrap();
        assert_eq!(p.state_dim(), 80);
    }

    #[test]
    fn rest_is_equilibrium_without_forcing() {
        let mut spec = ShearFrameSpec::uniform(5, 100.0, 5.0);
        spec.forcing_amp = 0.0;
        let (p, _) = build_shear_frame(&spec, 0.01).unwrap();
        let b = p.drift(&spec.rest_state(), 0.3);
        assert!(b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forcing_profile() {
        let mut spec = ShearFrameSpec::uniform(3, 100.0, 5.0);
        spec.xi = -0.5;
        assert_eq!(spec.forcing(0.0), 250.0);
        let t = 0.7;
        assert!((spec.forcing(t) - 250.0 * (-t).exp() * (5.0 * t).cos()).abs() < 1e-12);
        let (p, _) = build_shear_frame(&spec, 0.0).unwrap();
        let b = p.drift(&spec.rest_state(), t);
        assert!((b[3] - spec.forcing(t)).abs() < 1e-12);
    }

    #[test]
    fn measurement_extracts_velocities() {
        let mut spec = ShearFrameSpec::uniform(4, 100.0, 5.0);
        spec.measured = vec![1, 3];
        let (_, m) = build_shear_frame(&spec, 0.0).unwrap();
        let x = DVector::from_fn(16, |i, _| i as f64);
        assert_eq!(m.observe(&x, 0.0), DVector::from_row_slice(&[5.0, 7.0]));
    }

    #[test]
    fn damaged_frame_variants() {
        let spec = ShearFrameSpec::uniform(20, 100.0, 5.0);
        let damaged = damage(&spec, 10, 98.0).unwrap();
        for (i, &k) in damaged.k_ref.iter().enumerate() {
            assert_eq!(k, if i == 9 { 98.0 } else { 100.0 });
        }
        assert_eq!(damage(&spec, 10, 100.0).unwrap(), spec);
        assert!(build_damaged_frame(&spec, 0, 98.0, 0.0).is_err());
        assert!(build_damaged_frame(&spec, 21, 98.0, 0.0).is_err());
        assert!(build_damaged_frame(&spec, 20, 98.0, 0.0).is_ok());
    }

    #[test]
    fn spec_validation() {
        let mut s = ShearFrameSpec::uniform(3, 100.0, 5.0);
        s.c_ref[1] = 0.0;
        assert!(s.validate().is_err());
        let mut s = ShearFrameSpec::uniform(3, 100.0, 5.0);
        s.measured = vec![3];
        assert!(s.validate().is_err());
        assert!(ShearFrameSpec::uniform(0, 100.0, 5.0).validate().is_err());
    }

    #[test]
    fn parameter_channels_have_zero_drift() {
        let spec = ShearFrameSpec::uniform(3, 100.0, 5.0);
        let (p, _) = build_shear_frame(&spec, 0.01).unwrap();
        let x = DVector::from_fn(12, |i, _| 1.0 + i as f64);
        let b = p.drift(&x, 0.2);
        assert!(b.rows(6, 6).iter().all(|&v| v == 0.0));
    }
}
