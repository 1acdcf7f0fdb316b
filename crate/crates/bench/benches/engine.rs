use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sleepy_core::engine::run_config;
use sleepy_core::harness::{decaying, fluctuating, steady};
use sleepy_core::metrics::analyze;

fn engine(c: &mut Criterion) {
    let mut g = c.benchmark_group("engine");
    g.sample_size(10);
    for n in [7usize, 13] {
        g.bench_with_input(BenchmarkId::new("base", n), &n, |b, &n| {
            b.iter(|| run_config(&steady(n, 1, 100)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("fluctuating", n), &n, |b, &n| {
            b.iter(|| run_config(&fluctuating(n, 1, 100)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("decaying", n), &n, |b, &n| {
            b.iter(|| run_config(&decaying(n, 1, 100)).unwrap())
        });
    }
    g.finish();
}

fn analysis(c: &mut Criterion) {
    let trace = run_config(&fluctuating(9, 1, 200)).unwrap();
    c.bench_function("analyze/fluctuating/9", |b| b.iter(|| analyze(&trace).unwrap()));
}

criterion_group!(benches, engine, analysis);
criterion_main!(benches);
