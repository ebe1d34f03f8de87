use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qkrr::cv::{evolve_block, prepare_g12, to_position, JointState, QumodeGrid};
use qkrr::fixtures::{bundled_dataset, bundled_test_points, synthetic_dataset};
use qkrr::numerics::svd;
use qkrr::{run_regression, FeatureEncoder, GramMatrix, PipelineConfig, Regressor, Tier};
use std::hint::black_box;

fn gram(c: &mut Criterion) {
    let mut group = c.benchmark_group("gram");
    for m in [8usize, 32, 64] {
        let data = synthetic_dataset(m, 4, 1).unwrap();
        let enc = FeatureEncoder::Coherent { cutoff: 20 };
        let states: Vec<_> = data.samples().iter().map(|s| qkrr::encode(&enc, &s.features).unwrap()).collect();
        group.bench_with_input(BenchmarkId::from_parameter(m), &states, |b, st| {
            b.iter(|| GramMatrix::from_states(black_box(st)).unwrap())
        });
    }
    group.finish();
}

fn svd_bench(c: &mut Criterion) {
    let mut group = c.benchmark_group("svd");
    for m in [8usize, 32] {
        let data = synthetic_dataset(m, 2, 2).unwrap();
        let states: Vec<_> =
            data.samples().iter().map(|s| qkrr::encode(&FeatureEncoder::Amplitude, &s.features).unwrap()).collect();
        let k = GramMatrix::from_states(&states).unwrap().entries().clone();
        group.bench_with_input(BenchmarkId::from_parameter(m), &k, |b, k| b.iter(|| svd(black_box(k)).unwrap()));
    }
    group.finish();
}

fn grid(c: &mut Criterion) {
    let mut group = c.benchmark_group("grid");
    group.sample_size(10);
    let g = QumodeGrid::for_resource(4.0, 1.0, 1e-6).unwrap();
    group.bench_function("evolve_block", |b| b.iter(|| evolve_block(&g, 4.0, 1.0, 0.8, 0.1).unwrap()));
    let data = bundled_dataset();
    let reg = Regressor::new(&data, &FeatureEncoder::Coherent { cutoff: 20 }, &PipelineConfig::default()).unwrap();
    let g12 = prepare_g12(&g, 4.0).unwrap();
    let lam = reg.ideal_coefficients();
    let norm = lam.iter().map(|l| l * l).sum::<f64>().sqrt() * g12.norm();
    let lam: Vec<f64> = lam.iter().map(|l| l / norm).collect();
    let joint = JointState::new(&lam, &g12, 4.0).unwrap();
    group.bench_function("to_position", |b| b.iter(|| to_position(black_box(&joint)).unwrap()));
    group.finish();
}

fn pipeline(c: &mut Criterion) {
    let data = bundled_dataset();
    let pts = bundled_test_points();
    let enc = FeatureEncoder::Coherent { cutoff: 20 };
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    for tier in [Tier::Ideal, Tier::ShotSampled] {
        let cfg = PipelineConfig { tier, ..PipelineConfig::default() };
        group.bench_function(tier.name(), |b| b.iter(|| run_regression(&data, &enc, &cfg, &pts).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, gram, svd_bench, grid, pipeline);
criterion_main!(benches);
