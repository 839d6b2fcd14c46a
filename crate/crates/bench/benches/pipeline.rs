use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use enrich_bench::{scored_dataset, shaper8, uniform_inputs};
use enrich_core::art::{gen_tests, SearchBox};
use enrich_core::reduce::reduce;
use enrich_core::regtree::build_tree;
use enrich_core::robustness::{label_by_perturbation, score_input};
use enrich_core::{run_baseline, run_enrich, QualityConstants, RobustnessParams, RunParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn simulator(c: &mut Criterion) {
    let config = shaper8();
    let quality = QualityConstants::default();
    let params = RobustnessParams::uniform(8);
    let inputs = uniform_inputs(&config, 64, 1);
    c.bench_function("score_input x64", |b| {
        b.iter(|| {
            for t in &inputs {
                black_box(score_input(&config, t, &quality, &params, None).unwrap());
            }
        })
    });
    c.bench_function("label_by_perturbation x64", |b| {
        b.iter(|| {
            for t in &inputs {
                black_box(label_by_perturbation(&config, t, &quality, &params, None).unwrap());
            }
        })
    });
}

fn search_and_tree(c: &mut Criterion) {
    let config = shaper8();
    let full = SearchBox::full(&config);
    c.bench_function("gen_tests 100", |b| {
        b.iter_batched(
            || ChaCha8Rng::seed_from_u64(3),
            |mut rng| black_box(gen_tests(&full, 100, &[], 10, &mut rng).unwrap()),
            BatchSize::SmallInput,
        )
    });
    let data = scored_dataset(&config, 300, 2);
    c.bench_function("build_tree 300 rows", |b| {
        b.iter(|| black_box(build_tree(&data, 1).unwrap()))
    });
    let tree = build_tree(&data, 1).unwrap();
    c.bench_function("reduce", |b| {
        b.iter(|| black_box(reduce(&tree, 3.6, 0.05, &config).unwrap()))
    });
}

fn full_runs(c: &mut Criterion) {
    let config = shaper8();
    let quality = QualityConstants::default();
    let params = RunParams::default();
    let mut group = c.benchmark_group("runs");
    group.sample_size(20);
    group.bench_function("enrich 300 calls", |b| {
        b.iter(|| black_box(run_enrich(&config, &quality, &params).unwrap()))
    });
    group.bench_function("baseline 300 calls", |b| {
        b.iter(|| black_box(run_baseline(&config, &quality, &params).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, simulator, search_and_tree, full_runs);
criterion_main!(benches);
