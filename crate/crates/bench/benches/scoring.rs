use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nbselect::{select_best, CriterionSpec, SearchOptions, Structure, SuffStats};
use nbselect_bench::fixture;

fn select(c: &mut Criterion) {
    let data = fixture(250, 10, 42);
    let mut group = c.benchmark_group("select_best");
    group.sample_size(10);
    for name in ["uevi", "preq", "loocv", "bic"] {
        let spec = CriterionSpec::from_name(name).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(name), &spec, |b, spec| {
            b.iter(|| select_best(black_box(&data), spec, &SearchOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn class_predictive(c: &mut Criterion) {
    let data = fixture(500, 14, 7);
    let stats = SuffStats::collect(&data, Structure::full(14)).unwrap();
    let probes: Vec<Vec<u32>> = data.rows().take(64).map(|r| r.features.to_vec()).collect();
    c.bench_function("class_predictive 14 features", |b| {
        b.iter(|| {
            for p in &probes {
                black_box(stats.class_predictive(black_box(p)).unwrap());
            }
        })
    });
}

criterion_group!(benches, select, class_predictive);
criterion_main!(benches);
