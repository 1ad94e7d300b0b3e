use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use pilotgraph_bench::*;
use pilotgraph_core::channel::MmseFilter;
use pilotgraph_core::clustering::{build_similarity_matrix, kmedoids};
use pilotgraph_core::config::{ClusteringConfig, PilotOptConfig};
use pilotgraph_core::linalg::{cn01, CMat, CVec, Complex64};
use pilotgraph_core::pilotopt::{adaptive_threshold, solve_coloring, ColoringModel};
use pilotgraph_core::receiver::{mmmse_combiner, mmmse_combiner_diagonal};
use pilotgraph_core::scheduler::ffd_pack;
use pilotgraph_core::RandomStream;
use std::hint::black_box;

fn coloring(c: &mut Criterion) {
    let cfg = PilotOptConfig::default();
    let g = random_graph(1, 12, 0.5);
    c.bench_function("solve_coloring/n12_p0.5", |b| {
        b.iter(|| solve_coloring(black_box(&ColoringModel::new(g.clone(), 12, &cfg))).unwrap())
    });
    let im = random_interference(2, 7, 7);
    c.bench_function("adaptive_threshold/L7_C7", |b| {
        b.iter(|| adaptive_threshold(black_box(&im), &cfg).unwrap())
    });
}

fn clustering(c: &mut Criterion) {
    let profiles = random_profiles(3, 60, 64);
    let s = build_similarity_matrix(0, &profiles).unwrap();
    let cfg = ClusteringConfig::default();
    c.bench_function("kmedoids/K60_C7", |b| {
        b.iter_batched(
            || RandomStream::new(4).rng(),
            |mut rng| kmedoids(black_box(&s), 7, &cfg, &mut rng).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn estimation(c: &mut Criterion) {
    let rs = random_correlations(5, 7, 64);
    let refs: Vec<&CMat> = rs.iter().collect();
    let powers = vec![100.0; 7];
    c.bench_function("mmse_group/M64_7copilots", |b| {
        b.iter(|| MmseFilter::group(black_box(&refs), &powers, 4e-10, 7).unwrap())
    });
}

fn combining(c: &mut Criterion) {
    let mut rng = RandomStream::new(6).rng();
    for (m, n) in [(64, 49), (128, 49)] {
        let g = CMat::from_fn(m, n, |_, _| cn01(&mut rng));
        let d: Vec<f64> = (0..m).map(|i| 0.1 + 0.01 * i as f64).collect();
        let z = CMat::from_diagonal(&CVec::from_iterator(m, d.iter().map(|&x| Complex64::new(x, 0.0))));
        let own: Vec<usize> = (0..7).collect();
        c.bench_function(&format!("mmmse_dense/M{m}_N{n}"), |b| {
            b.iter(|| mmmse_combiner(black_box(&g), &own, &z).unwrap())
        });
        c.bench_function(&format!("mmmse_diagonal/M{m}_N{n}"), |b| {
            b.iter(|| mmmse_combiner_diagonal(black_box(&g), &own, &d).unwrap())
        });
    }
}

fn scheduling(c: &mut Criterion) {
    let fractions = random_fractions(7, 400);
    c.bench_function("ffd_pack/K400", |b| b.iter(|| ffd_pack(black_box(&fractions))));
}

criterion_group!(benches, coloring, clustering, estimation, combining, scheduling);
criterion_main!(benches);
