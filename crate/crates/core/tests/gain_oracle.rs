mod common;

use common::{filled, max_abs_diff, oracle_gain, OracleInputs};
use enks_core::{
    compute_gain, iterate_update, make_schedule, AnnealingSchedule, Ensemble, Execution,
    FilterConfig, GainClock, GainContext, MeasurementModel,
};
use nalgebra::{DMatrix, DVector};

fn scalar_case() -> (Ensemble, DMatrix<f64>) {
    (
        Ensemble::new(DMatrix::from_row_slice(1, 2, &[1.0, 3.0])).unwrap(),
        DMatrix::from_row_slice(1, 2, &[0.5, 1.5]),
    )
}

fn config(alpha: f64, clock: GainClock) -> FilterConfig {
    let mut cfg = FilterConfig::new(2, 1.0, alpha, 0).unwrap();
    cfg.clock = clock;
    cfg
}

#[test]
fn scalar_two_particle_gain_matches_oracle() {
    let (pred, h) = scalar_case();
    let zero = DVector::zeros(1);
    let sigma = DMatrix::identity(1, 1);
    let ctx = GainContext {
        t_curr: 1.0,
        t_prev: 0.0,
        prev_state_mean: &zero,
        prev_meas_mean: &zero,
    };
    for (alpha, expected) in [(0.5, 2.0 / 3.0), (1e-12, 0.5)] {
        let want = oracle_gain(&OracleInputs {
            phi: pred.particles(),
            h: &h,
            lag_state_mean: &zero,
            lag_meas_mean: &zero,
            t: 1.0,
            t_lag: 0.0,
            alpha,
            sigma: &sigma,
        });
        assert!(
            (want[(0, 0)] - expected).abs() < 1e-11,
            "oracle gives {}",
            want[(0, 0)]
        );
        for clock in [GainClock::Local, GainClock::Absolute] {
            let got = compute_gain(&pred, &h, &ctx, &config(alpha, clock), &sigma).unwrap();
            assert!(
                max_abs_diff(got.values(), &want) < 1e-14,
                "{clock:?} alpha={alpha}"
            );
        }
    }
}

#[test]
fn multivariate_gain_matches_oracle_under_both_clocks() {
    let (n, q, big_n) = (4, 3, 9);
    for salt in 0..20u64 {
        let phi = filled(n, big_n, salt) * 3.0;
        let h = filled(q, big_n, salt + 100) + filled(q, n, salt + 200) * &phi * 0.5;
        let lag_state = DVector::from_column_slice(filled(n, 1, salt + 300).as_slice());
        let lag_meas = DVector::from_column_slice(filled(q, 1, salt + 400).as_slice());
        let sigma = DMatrix::identity(q, q) * 0.3 + filled(q, q, salt + 500) * 0.05;
        let (t_prev, t_curr) = (2.37, 2.38);
        let ctx = GainContext {
            t_curr,
            t_prev,
            prev_state_mean: &lag_state,
            prev_meas_mean: &lag_meas,
        };
        let pred = Ensemble::new(phi.clone()).unwrap();
        for (clock, t, t_lag) in [
            (GainClock::Absolute, t_curr, t_prev),
            (GainClock::Local, t_curr - t_prev, 0.0),
        ] {
            let want = oracle_gain(&OracleInputs {
                phi: &phi,
                h: &h,
                lag_state_mean: &lag_state,
                lag_meas_mean: &lag_meas,
                t,
                t_lag,
                alpha: 0.8,
                sigma: &sigma,
            });
            let got = compute_gain(&pred, &h, &ctx, &config(0.8, clock), &sigma).unwrap();
            let scale = want.amax().max(1e-300);
            assert!(
                max_abs_diff(got.values(), &want) <= 1e-9 * scale,
                "salt {salt} {clock:?}: {} vs {}",
                got.values(),
                want
            );
        }
    }
}

#[test]
fn iterated_once_matches_oracle() {
    let (pred, h0) = scalar_case();
    let zero = DVector::zeros(1);
    let sigma = DMatrix::identity(1, 1);
    let meas = MeasurementModel::new(
        1,
        |x: &DVector<f64>, _| x * 0.5,
        DMatrix::identity(1, 1),
        1.0,
    )
    .unwrap();
    assert_eq!(meas.sigma(), sigma);
    let ctx = GainContext {
        t_curr: 1.0,
        t_prev: 0.0,
        prev_state_mean: &zero,
        prev_meas_mean: &zero,
    };
    let y = DVector::from_element(1, 2.0);
    let schedule = make_schedule(2).unwrap();
    let beta0 = schedule.betas()[0];
    let cfg = config(0.5, GainClock::Absolute);

    let oracle = |phi: &DMatrix<f64>, h: &DMatrix<f64>| {
        oracle_gain(&OracleInputs {
            phi,
            h,
            lag_state_mean: &zero,
            lag_meas_mean: &zero,
            t: 1.0,
            t_lag: 0.0,
            alpha: 0.5,
            sigma: &sigma,
        })[(0, 0)]
    };
    let g0 = oracle(pred.particles(), &h0);
    let phi1 = pred.particles() + DMatrix::from_fn(1, 2, |_, j| beta0 * g0 * (2.0 - h0[(0, j)]));
    let h1 = &phi1 * 0.5;
    let g1 = oracle(&phi1, &h1);
    let phi2 = &phi1 + DMatrix::from_fn(1, 2, |_, j| g1 * (2.0 - h1[(0, j)]));

    let (out, trace) = iterate_update(
        &pred,
        &ctx,
        &y,
        &schedule,
        &meas,
        &cfg,
        Execution::Sequential,
    )
    .unwrap();
    assert!(
        max_abs_diff(out.particles(), &phi2) < 1e-13,
        "{} vs {}",
        out.particles(),
        phi2
    );
    assert!((trace.residuals[0] - (&phi1 - pred.particles()).norm()).abs() < 1e-13);
    assert!((trace.residuals[1] - (&phi2 - &phi1).norm()).abs() < 1e-13);
    assert_eq!(trace.residuals.len(), 2);
    assert_eq!(trace.innovation_norms.len(), 2);
}

#[test]
fn custom_schedule_is_honoured() {
    let (pred, _) = scalar_case();
    let zero = DVector::zeros(1);
    let meas = MeasurementModel::new(
        1,
        |x: &DVector<f64>, _| x.clone(),
        DMatrix::identity(1, 1),
        1.0,
    )
    .unwrap();
    let ctx = GainContext {
        t_curr: 1.0,
        t_prev: 0.0,
        prev_state_mean: &zero,
        prev_meas_mean: &zero,
    };
    let y = DVector::from_element(1, 2.0);
    let cfg = config(0.5, GainClock::Local);
    let sched = AnnealingSchedule::new(vec![0.25, 0.5, 1.0]).unwrap();
    let (_, trace) =
        iterate_update(&pred, &ctx, &y, &sched, &meas, &cfg, Execution::Sequential).unwrap();
    assert_eq!(trace.residuals.len(), 3);
}
