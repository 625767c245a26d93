use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use postcut_bench::{admissibility, mixture_draws, scatter, State};
use postcut_core::mcmc::{run_chain, ChainConfig};
use postcut_core::plan::{compute_stats, count_cut_edges};
use postcut_core::seeding::{kmeans_plan, srkmeans, weighted_kmeans, RebalanceConfig};
use postcut_core::stats::{fit_gmm, select_k_bic};
use postcut_core::tda::{build_network, epsilon_from_percentile, h0_persistence};
use postcut_core::Geography;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn persistence(c: &mut Criterion) {
    let mut g = c.benchmark_group("h0_persistence");
    for n in [250, 1000, 4000] {
        let points = scatter(n, 300.0, n as u64);
        g.bench_with_input(BenchmarkId::from_parameter(n), &points, |b, p| {
            b.iter(|| h0_persistence(black_box(p)).unwrap())
        });
    }
    g.finish();
}

fn network(c: &mut Criterion) {
    let s = State::grid(20, 3, 1);
    let points: Vec<_> = s.offices.iter().map(|o| o.xy).collect();
    let eps = epsilon_from_percentile(&h0_persistence(&points).unwrap(), 100.0).unwrap();
    c.bench_function("build_network/1200", |b| {
        b.iter(|| build_network(black_box(&s.offices), eps).unwrap())
    });
}

fn geography(c: &mut Criterion) {
    let s = State::grid(20, 1, 2);
    let units = s.geo.units().to_vec();
    c.bench_function("adjacency/400", |b| {
        b.iter_batched(|| units.clone(), |u| Geography::new(u, 1e-6).unwrap(), BatchSize::SmallInput)
    });
    let plan = s.seed_plan(4);
    c.bench_function("plan_stats/400", |b| b.iter(|| compute_stats(black_box(&plan), &s.geo, None).unwrap()));
}

fn cut_edges(c: &mut Criterion) {
    let s = State::grid(20, 3, 4);
    let plan = s.seed_plan(4);
    let counter = s.counter();
    let mut g = c.benchmark_group("cut_edges");
    g.bench_function("counter", |b| b.iter(|| counter.count(black_box(&plan))));
    g.bench_function("brute_force", |b| {
        b.iter(|| count_cut_edges(black_box(&plan), &s.network, &s.offices, &s.geo).unwrap())
    });
    g.finish();
}

fn seeding(c: &mut Criterion) {
    let s = State::grid(15, 1, 5);
    let points: Vec<_> = s.geo.units().iter().map(|u| u.centroid).collect();
    let weights: Vec<f64> = s.geo.units().iter().map(|u| u.population as f64).collect();
    c.bench_function("weighted_kmeans/225x4", |b| {
        b.iter(|| weighted_kmeans(&points, &weights, 4, &mut ChaCha8Rng::seed_from_u64(1)).unwrap())
    });
    let (plan, _) = kmeans_plan(&s.geo, 4, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let cfg = RebalanceConfig::new(admissibility(), 1);
    c.bench_function("srkmeans/225x4", |b| b.iter(|| srkmeans(&plan, &s.geo, &cfg).unwrap()));
}

fn chain(c: &mut Criterion) {
    let s = State::grid(12, 2, 6);
    let plan = s.seed_plan(3);
    let counter = s.counter();
    let cfg = ChainConfig::new(2000, admissibility(), 9);
    let mut g = c.benchmark_group("chain");
    g.sample_size(20);
    g.bench_function("2000_steps/144", |b| {
        b.iter(|| run_chain(plan.clone(), &cfg, &s.geo, &counter).unwrap())
    });
    g.finish();
}

fn mixtures(c: &mut Criterion) {
    let data = mixture_draws(10_000, 7);
    let mut g = c.benchmark_group("gmm");
    g.sample_size(10);
    g.bench_function("fit_k3/10000", |b| b.iter(|| fit_gmm(black_box(&data), 3, 1).unwrap()));
    g.bench_function("select_k6/10000", |b| b.iter(|| select_k_bic(black_box(&data), 6, 1).unwrap()));
    g.finish();
}

criterion_group!(benches, persistence, network, geography, cut_edges, seeding, chain, mixtures);
criterion_main!(benches);
