use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use fairaudit::benn::{grad_step, post_process, GeneratorNet, LossConfig};
use fairaudit::metrics::{estimate_all_from_outcomes, MetricOptions};
use fairaudit::model::{predict, train_tree, TreeConfig};
use fairaudit_bench::synthetic_fixture;

fn metrics(c: &mut Criterion) {
    let (ds, tree) = synthetic_fixture(3050);
    let outcomes = predict(&tree, ds.rows().view()).unwrap();
    let opts = MetricOptions::default();
    c.bench_function("metrics/21 on 3050 rows", |b| {
        b.iter(|| estimate_all_from_outcomes(black_box(&ds), black_box(&outcomes), "biased", &opts).unwrap())
    });
}

fn tree(c: &mut Criterion) {
    let (ds, _) = synthetic_fixture(3050);
    c.bench_function("tree/train on 3050 rows", |b| {
        b.iter(|| train_tree(black_box(&ds), &TreeConfig::default(), 0).unwrap())
    });
}

fn benn(c: &mut Criterion) {
    let (ds, tree) = synthetic_fixture(305);
    let batch = ds.select(&(0..128).collect::<Vec<_>>()).rows().clone();
    let cfg = LossConfig::default();
    c.bench_function("benn/grad step, batch 128", |b| {
        b.iter_batched(
            || GeneratorNet::new(ds.n_features(), 0),
            |mut net| grad_step(&mut net, batch.view(), &tree, &cfg, 0.001).unwrap(),
            BatchSize::SmallInput,
        )
    });
    let net = GeneratorNet::new(ds.n_features(), 0);
    let vectors = net.forward(ds.rows().view()).unwrap();
    c.bench_function("benn/post-process 305 rows", |b| {
        b.iter(|| post_process(black_box(vectors.view())))
    });
}

criterion_group!(benches, metrics, tree, benn);
criterion_main!(benches);
