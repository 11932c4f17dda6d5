use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use volterra_core::output_kernel::{conv2_direct, conv2_fft, output_kernel};
use volterra_core::{BlockStructure, DcParams, Kappa2, KernelHyper, ZetaSpec};

fn hyper(n: usize, wh: bool) -> KernelHyper {
    let k1 = DcParams::unit(0.1, 0.05);
    KernelHyper {
        a: vec![1.0, 0.5],
        h0: 0.0,
        k1,
        k2: if wh { Kappa2::Dc(k1) } else { Kappa2::Delta },
        zeta: ZetaSpec::exp_decay(),
        structure: BlockStructure::Full,
        sigma2: 0.1,
        memory: n,
    }
}

fn signal(len: usize) -> Vec<f64> {
    (0..len)
        .map(|t| ((t * 7919) % 1000) as f64 / 500.0 - 1.0)
        .collect()
}

fn build(c: &mut Criterion) {
    let mut group = c.benchmark_group("output_kernel");
    group.sample_size(10);
    let u = signal(400);
    for (name, wh) in [("wiener", false), ("wiener-hammerstein", true)] {
        let h = hyper(20, wh);
        group.bench_function(BenchmarkId::new(name, 400), |b| {
            b.iter(|| output_kernel(&h, &u, volterra_core::InitPolicy::TrimToKnown).unwrap())
        });
    }
    group.finish();
}

fn conv2(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv2");
    group.sample_size(10);
    let qw = DMatrix::from_fn(300, 300, |i, j| ((i * 31 + j * 17) % 97) as f64 / 97.0);
    for n in [8, 32] {
        let k2 = DMatrix::from_fn(n, n, |i, j| (-0.1 * (i + j) as f64).exp());
        group.bench_function(BenchmarkId::new("direct", n), |b| {
            b.iter(|| conv2_direct(&k2, &qw))
        });
        group.bench_function(BenchmarkId::new("fft", n), |b| {
            b.iter(|| conv2_fft(&k2, &qw))
        });
    }
    group.finish();
}

criterion_group!(benches, build, conv2);
criterion_main!(benches);
