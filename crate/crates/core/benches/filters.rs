use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use enks_core::problems::{build_shear_frame, ShearFrameSpec};
use enks_core::{
    enks_step, initial_ensemble, particle_streams, predict_ensemble, Execution, FilterConfig,
    FilterState, StreamPurpose,
};
use nalgebra::DVector;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn frame_setup(
    dof: usize,
    n: usize,
) -> (
    enks_core::ProcessModel,
    enks_core::MeasurementModel,
    enks_core::Ensemble,
) {
    let spec = ShearFrameSpec::uniform(dof, 100.0, 5.0);
    let (proc, meas) = build_shear_frame(&spec, 0.01).unwrap();
    let meas = meas
        .with_noise_std(&DVector::from_element(dof, 0.05), 0.01)
        .unwrap();
    let spread = DVector::from_fn(4 * dof, |i, _| if i < 2 * dof { 1e-3 } else { 1.0 });
    let ens = initial_ensemble(&spec.rest_state(), &spread, n, 1).unwrap();
    (proc, meas, ens)
}

fn predict(c: &mut Criterion) {
    let mut group = c.benchmark_group("predict_ensemble");
    for &(dof, n) in &[(20usize, 300usize), (50, 800)] {
        let (proc, _, ens) = frame_setup(dof, n);
        for (name, exec) in MODES {
            group.bench_with_input(
                BenchmarkId::new(name, format!("frame{dof}_N{n}")),
                &exec,
                |b, &exec| {
                    let mut streams = particle_streams(1, StreamPurpose::Prediction, n);
                    b.iter(|| predict_ensemble(&proc, &ens, 0.0, 0.01, &mut streams, exec).unwrap())
                },
            );
        }
    }
    group.finish();
}

fn step(c: &mut Criterion) {
    let mut group = c.benchmark_group("enks_step");
    group.sample_size(20);
    for &(dof, n) in &[(20usize, 300usize), (50, 800)] {
        let (proc, meas, ens) = frame_setup(dof, n);
        let cfg = FilterConfig::new(n, 0.01, 0.8, 1).unwrap();
        let y = DVector::zeros(dof);
        for (name, exec) in MODES {
            let state = FilterState::initial(ens.clone(), &meas, 0.0, exec).unwrap();
            group.bench_with_input(
                BenchmarkId::new(name, format!("frame{dof}_N{n}")),
                &exec,
                |b, &exec| {
                    let mut streams = particle_streams(1, StreamPurpose::Prediction, n);
                    b.iter(|| {
                        enks_step(&state, &proc, &meas, &y, &cfg, &mut streams, exec).unwrap()
                    })
                },
            );
        }
    }
    group.finish();
}

criterion_group!(benches, predict, step);
criterion_main!(benches);
