use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use skewld::diagnostics::{self, GridSpec};
use skewld::dynamics::{self, ForceSpec, NoiseSpec};
use skewld::model::{self, GenerationMode, LikelihoodScale, ModelSpec};
use skewld::rng::RandomStream;
use skewld::sampler::{self, BatchKind, BatchPolicy, ReplicaConfig, RunConfig};

fn forces(c: &mut Criterion) {
    let g2 = [0.7, -1.3];
    let g8: Vec<f64> = (0..8).map(|k| k as f64 * 0.3 - 1.0).collect();
    let grads: Vec<Vec<f64>> = (0..10)
        .map(|r| vec![r as f64 * 0.1, 1.0 - r as f64 * 0.2])
        .collect();
    c.bench_function("force/rotation2d", |b| {
        b.iter(|| dynamics::skew_force_2d(black_box(&g2), 5.0).unwrap())
    });
    c.bench_function("force/circular-8", |b| {
        b.iter(|| dynamics::skew_force_circular(black_box(&g8), 5.0).unwrap())
    });
    c.bench_function("force/replica-ring-10", |b| {
        b.iter(|| dynamics::replica_force(black_box(&grads), 5.0).unwrap())
    });
}

fn langevin(c: &mut Criterion) {
    let spec = ModelSpec::benchmark();
    let data = model::generate_data(&[0.0, 2.0], 100, &spec, GenerationMode::Mixture, 1).unwrap();
    let force = ForceSpec::rotation2d(5.0);
    let noise = NoiseSpec::default();
    c.bench_function("langevin/minibatch-step", |b| {
        let mut rng = RandomStream::new(1, 1);
        let mut theta = vec![0.1, 1.9];
        let mut k = 0;
        b.iter(|| {
            k = (k + 1) % data.len();
            let g = model::energy_gradient(&theta, &data, &[k], 1.0, &spec).unwrap();
            let a = force.force(&g).unwrap();
            theta = dynamics::langevin_step(&theta, &a, 1e-4, &noise, &mut rng)
                .unwrap()
                .0;
        })
    });
}

fn runs(c: &mut Criterion) {
    let spec = ModelSpec::benchmark();
    let data = model::generate_data(&[0.0, 2.0], 100, &spec, GenerationMode::Mixture, 1).unwrap();
    let schedule = sampler::solve_schedule(0.01, 0.0001, 10_000, 0.55).unwrap();
    let mut group = c.benchmark_group("run-10k-steps");
    group.sample_size(20);
    let single = {
        let batch = BatchPolicy {
            kind: BatchKind::EpochShuffle,
            size: 1,
        };
        let mut cfg = RunConfig::new(spec, ForceSpec::rotation2d(5.0), schedule, batch, 10_000, 1);
        cfg.scale = LikelihoodScale::Average;
        cfg
    };
    group.bench_function("single", |b| {
        b.iter(|| sampler::run(&single, &data).unwrap())
    });
    for parallel in [false, true] {
        let mut cfg = single.clone();
        cfg.force = ForceSpec::plain();
        cfg.force.gamma = 5.0;
        cfg.batch.size = 10;
        cfg.replicas = Some(ReplicaConfig::uniform(10, 1));
        cfg.parallel = parallel;
        let name = if parallel { "parallel" } else { "serial" };
        group.bench_function(BenchmarkId::new("replicas-10", name), |b| {
            b.iter(|| sampler::run(&cfg, &data).unwrap())
        });
    }
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let spec = ModelSpec::benchmark();
    let data = model::generate_data(&[0.0, 2.0], 100, &spec, GenerationMode::Mixture, 1).unwrap();
    let grid = GridSpec::benchmark();
    let mut group = c.benchmark_group("oracle");
    group.sample_size(10);
    group.bench_function("grid-posterior-240x320", |b| {
        b.iter(|| diagnostics::grid_posterior(&spec, &data, &grid, LikelihoodScale::Sum).unwrap())
    });
    group.finish();
}

criterion_group!(benches, forces, langevin, runs, oracle);
criterion_main!(benches);
