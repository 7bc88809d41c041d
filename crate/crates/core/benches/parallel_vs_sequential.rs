use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use fbx_core::antisym::make_parallel_bsc;
use fbx_core::channel::solve_caid;
use fbx_core::converse::increment_law;
use fbx_core::flf_sim::{default_params_with, simulate_trials, FlfOptions, Sampler};
use fbx_core::oracle::coupled_counts_mc;
use fbx_core::vlf::{default_vlf_params, simulate_vlf, VlfMode};
use fbx_core::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn bench(c: &mut Criterion) {
    let pair = make_parallel_bsc(0.05, 0.10).unwrap();
    let a = solve_caid(&pair, 1e-10).unwrap();
    let flf = default_params_with(100_000, 0.05, &a, &pair, &FlfOptions::default()).unwrap();
    let vlf = default_vlf_params(2000, &a, &pair).unwrap();
    let law = increment_law(&a, &pair).unwrap();

    let mut g = c.benchmark_group("workloads");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new("flf_trials_2000", name), &exec, |b, &e| {
            b.iter(|| simulate_trials(&flf, &pair, &a.p_star, 2000, 1, Sampler::Counts, e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("vlf_trials_5000", name), &exec, |b, &e| {
            b.iter(|| simulate_vlf(&vlf, &pair, 5000, 1, VlfMode::Analytic, e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("coupled_mc_n20_1e5", name), &exec, |b, &e| {
            b.iter(|| coupled_counts_mc(&pair, 20, 100_000, 1, e))
        });
        g.bench_with_input(BenchmarkId::new("converse_sum_law_n2000", name), &exec, |b, &e| {
            b.iter(|| law.sum_law(2000, e).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
