//! Sequential vs rayon execution of the data-parallel kernels.

use adasharp::data::{Dataset, GaussianMixture};
use adasharp::diaglin::{run_study, StudyConfig, TaskConfig};
use adasharp::exec::{with_policy, Execution};
use adasharp::hessian::{hutchinson_trace, HessianOperator};
use adasharp::models::ModelSpec;
use adasharp::perturb::{Norm, ScalingMode};
use adasharp::rng::stream;
use adasharp::sharpness::{sharpness, Mode, SharpnessConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const POLICIES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn mlp() -> (ModelSpec, Vec<f64>, Dataset) {
    let spec = ModelSpec::Mlp {
        widths: vec![10, 32, 32, 3],
        bias: true,
    };
    let data = GaussianMixture {
        n_classes: 3,
        dim: 10,
        separation: 4.0,
        seed: 0,
    }
    .sample(512, 0)
    .unwrap();
    let w = spec.init(1.0, &mut stream(0, &[])).into_values();
    (spec, w, data)
}

fn avg_sharpness(c: &mut Criterion) {
    let (spec, w, data) = mlp();
    let mut cfg = SharpnessConfig::new(Mode::Avg, Norm::L2, 0.1, ScalingMode::Adaptive, 128);
    cfg.n_batches = 4;
    cfg.n_samples = 50;
    let mut group = c.benchmark_group("avg_sharpness");
    for (name, policy) in POLICIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| with_policy(policy, || sharpness(&spec, &w, &data, &cfg).unwrap()))
        });
    }
    group.finish();
}

fn hutchinson(c: &mut Criterion) {
    let (spec, w, data) = mlp();
    let op = HessianOperator::new(&spec, &w, &data, false).unwrap();
    let mut group = c.benchmark_group("hutchinson");
    for (name, policy) in POLICIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| with_policy(policy, || hutchinson_trace(&op, 64, 1).unwrap()))
        });
    }
    group.finish();
}

fn diaglin_pool(c: &mut Criterion) {
    let cfg = StudyConfig {
        n_models: 8,
        task: TaskConfig {
            n: 40,
            d: 80,
            ..TaskConfig::default()
        },
        max_steps: 20_000,
        target_loss: 1e-4,
        ..StudyConfig::default()
    };
    let mut group = c.benchmark_group("diaglin_pool");
    group.sample_size(10);
    for (name, policy) in POLICIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| with_policy(policy, || run_study(&cfg).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, avg_sharpness, hutchinson, diaglin_pool);
criterion_main!(benches);
