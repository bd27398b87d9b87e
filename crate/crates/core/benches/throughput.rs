//! Throughput of the data-parallel kernels, comparing the rayon-backed
//! backend against a single-thread pool and the plain sequential helper.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use iterlip::models::{ar1_gaussian, doubling_ifs, ObservableKind};
use iterlip::simulate::{cesaro_measure, sample_terminal, InitDist};
use iterlip::spectral::{build_operator, OperatorGrid};
use iterlip::{par, rng};

fn single_thread_pool() -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()
}

fn bench_sample_terminal(c: &mut Criterion) {
    let model = doubling_ifs(ObservableKind::Coordinate { index: 0 }).with_centering(0.5);
    let mut group = c.benchmark_group("sample_terminal_4096x256");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| sample_terminal(&model, &InitDist::X0, 256, 4096, 1).unwrap())
    });
    let pool = single_thread_pool();
    group.bench_function("sequential_pool", |b| {
        b.iter(|| pool.install(|| sample_terminal(&model, &InitDist::X0, 256, 4096, 1).unwrap()))
    });
    group.finish();
}

fn bench_gaussian_paths(c: &mut Criterion) {
    let model = ar1_gaussian(0.5, ObservableKind::Coordinate { index: 0 });
    let mut group = c.benchmark_group("ar1_terminal_2048x512");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| sample_terminal(&model, &InitDist::X0, 512, 2048, 2).unwrap())
    });
    let pool = single_thread_pool();
    group.bench_function("sequential_pool", |b| {
        b.iter(|| pool.install(|| sample_terminal(&model, &InitDist::X0, 512, 2048, 2).unwrap()))
    });
    group.finish();
}

fn bench_operator_build(c: &mut Criterion) {
    let model = doubling_ifs(ObservableKind::Coordinate { index: 0 }).with_centering(0.5);
    let nu = cesaro_measure(&model, 2048, 3, 8).unwrap();
    let mut group = c.benchmark_group("build_operator");
    group.sample_size(10);
    for nodes in [257usize, 513] {
        let grid = OperatorGrid::from_measure(&model, &nu, nodes).unwrap();
        group.bench_with_input(BenchmarkId::new("parallel", nodes), &grid, |b, g| {
            b.iter(|| build_operator(&model, g, 0.3).unwrap())
        });
        let pool = single_thread_pool();
        group.bench_with_input(BenchmarkId::new("sequential_pool", nodes), &grid, |b, g| {
            b.iter(|| pool.install(|| build_operator(&model, g, 0.3).unwrap()))
        });
    }
    group.finish();
}

fn bench_map_indexed(c: &mut Criterion) {
    // the raw helper both backends share, on a compute-bound kernel
    let work = |i: usize| -> f64 {
        let mut r = rng::substream(42, i as u64);
        use rand::Rng;
        let mut acc = 0.0f64;
        for _ in 0..512 {
            let u: f64 = r.gen();
            acc += (u * std::f64::consts::PI).sin();
        }
        acc
    };
    let mut group = c.benchmark_group("map_indexed_2048x512");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| par::map_indexed(2048, work).iter().sum::<f64>())
    });
    group.bench_function("sequential", |b| {
        b.iter(|| par::map_indexed_seq(2048, work).iter().sum::<f64>())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_sample_terminal,
    bench_gaussian_paths,
    bench_operator_build,
    bench_map_indexed
);
criterion_main!(benches);
