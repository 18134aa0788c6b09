//! Hot-path timings: the cosine transform, the heat semigroup, noise
//! synthesis, and full integrator steps at production sizes.

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use sks_core::diagnostics::LyapunovParams;
use sks_core::dynamics::{ModelParams, State};
use sks_core::field::{Field, GridSpec};
use sks_core::integrator::{integrate, NoHook, ResumePoint, SchemeConfig, SchemeKind};
use sks_core::spectral::{apply_heat_semigroup, plan};
use sks_core::wiener::{GaussianStream, LiveNoise, NoiseSampler, NoiseSpec, StreamKey};
use sks_core::{effective_params, CorrectionConvention};

const N: usize = 256;

fn test_field(grid: GridSpec) -> Field {
    Field::from_fn(grid, |x| {
        1.0 + 0.5 * (std::f64::consts::PI * x).cos() + 0.1 * (3.0 * std::f64::consts::PI * x).cos()
    })
}

fn bench_transform(c: &mut Criterion) {
    let grid = GridSpec::new(N).unwrap();
    let dct = plan(grid);
    let f = test_field(grid);
    let spectrum = dct.forward(&f);
    c.bench_function("dct_forward_256", |b| {
        b.iter(|| dct.forward(black_box(&f)))
    });
    c.bench_function("dct_inverse_256", |b| {
        b.iter(|| dct.inverse(black_box(&spectrum)))
    });
}

fn bench_semigroup(c: &mut Criterion) {
    let grid = GridSpec::new(N).unwrap();
    let f = test_field(grid);
    c.bench_function("heat_semigroup_256", |b| {
        b.iter(|| apply_heat_semigroup(black_box(&f), 0.01, 1.0, 0.0).unwrap())
    });
}

fn bench_noise(c: &mut Criterion) {
    let grid = GridSpec::new(N).unwrap();
    let spec = NoiseSpec::new(1.5, 32, 0.5).unwrap();
    let sampler = NoiseSampler::new(&spec, grid);
    let mut stream = GaussianStream::new(StreamKey { seed: 1, stream: 0 });
    c.bench_function("noise_sample_256_k32", |b| {
        b.iter(|| sampler.sample(black_box(1e-4), &mut stream))
    });
}

fn bench_integrator(c: &mut Criterion) {
    let grid = GridSpec::new(N).unwrap();
    let state = State::new(
        test_field(grid),
        Field::from_fn(grid, |x| 0.5 + 0.2 * (std::f64::consts::PI * x).cos()),
    )
    .unwrap();
    let model = ModelParams::default();
    let n1 = NoiseSpec::new(1.5, 32, 0.3).unwrap();
    let n2 = NoiseSpec::new(2.5, 32, 0.2).unwrap();
    let eff = effective_params(&n1, &n2, model.alpha, CorrectionConvention::HalfGamma);
    let lyap = LyapunovParams::default();
    for (label, kind) in [
        ("semi_implicit_100_steps_256", SchemeKind::SemiImplicitEm),
        ("exponential_100_steps_256", SchemeKind::ExponentialEm),
    ] {
        let cfg = SchemeConfig {
            kind,
            dt: 1e-4,
            t_end: 1e-2,
            record_every: 100,
        };
        c.bench_function(label, |b| {
            b.iter(|| {
                let mut noise = LiveNoise::for_path(&n1, &n2, grid, 5, 0);
                integrate(
                    black_box(&state),
                    &model,
                    &eff,
                    &lyap,
                    &cfg,
                    &mut noise,
                    &mut NoHook,
                    ResumePoint::default(),
                )
                .unwrap()
            })
        });
    }
}

criterion_group!(
    kernels,
    bench_transform,
    bench_semigroup,
    bench_noise,
    bench_integrator
);
criterion_main!(kernels);
