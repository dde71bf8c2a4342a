use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use efc_bench::{trained, workload};
use efc_core::potts::{fit_class, Flows};
use std::hint::black_box;

fn fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_class");
    group.sample_size(10);
    for n in [25_000, 50_000, 100_000] {
        let table = workload(1, n, 8, 30, 1);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &table, |b, t| {
            b.iter(|| {
                fit_class("benign", Flows::new(t.symbols(), t.m()).unwrap(), 30, 0.5).unwrap()
            })
        });
    }
    group.finish();
}

fn classify(c: &mut Criterion) {
    let model = trained(&workload(5, 6000, 8, 30, 2));
    let probe = workload(5, 2000, 8, 30, 3);
    let mut group = c.benchmark_group("classify");
    group.throughput(Throughput::Elements(probe.n() as u64));
    group.bench_function("batch", |b| {
        b.iter(|| model.classify_batch(black_box(&probe)).unwrap())
    });
    group.bench_function("per_flow", |b| {
        b.iter(|| {
            probe
                .rows()
                .map(|row| model.classify(row).unwrap().argmin)
                .sum::<usize>()
        })
    });
    group.finish();
}

criterion_group!(benches, fit, classify);
criterion_main!(benches);
