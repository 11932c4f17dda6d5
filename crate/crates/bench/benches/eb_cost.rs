use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use volterra_bench::eb_fixture;
use volterra_core::SolverPath;

fn eb_cost(c: &mut Criterion) {
    let mut group = c.benchmark_group("eb_cost");
    group.sample_size(10);
    for n in [500, 1000, 2000] {
        for variant in ["dc-bd-w", "dc-ob-w"] {
            let (problem, h) = eb_fixture(variant, SolverPath::FastSeparable, n, 50);
            group.bench_with_input(
                BenchmarkId::new(format!("{variant}/fast"), n),
                &n,
                |b, _| b.iter(|| problem.evaluate(&h).unwrap().cost),
            );
        }
        let (problem, h) = eb_fixture("dc-ob-w", SolverPath::Dense, n, 50);
        group.bench_with_input(BenchmarkId::new("dc-ob-w/dense", n), &n, |b, _| {
            b.iter(|| problem.evaluate(&h).unwrap().cost)
        });
    }
    group.finish();
}

criterion_group!(benches, eb_cost);
criterion_main!(benches);
