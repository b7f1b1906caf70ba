//! Parallel against sequential execution on the two hot paths: the
//! leave-one-out grid search and per-subject feature extraction.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qoe_core::classify::{grid_search, TrainConfig};
use qoe_core::commands::dataset_features;
use qoe_core::config::RunConfig;
use qoe_core::par::Execution;
use qoe_core::seed::rng_for;
use qoe_core::selection::rank_features;
use qoe_core::synth::{generate_dataset, EffectSpec, StimulusSlot, SynthLayout};
use qoe_core::model::Content;
use rand::Rng;
use rand_distr::StandardNormal;

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn loo_grid(c: &mut Criterion) {
    let (n, d) = (40, 30);
    let mut rng = rng_for(3, &[]);
    let is_a: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let rows: Vec<Vec<f64>> = is_a
        .iter()
        .map(|&a| (0..d).map(|f| rng.sample::<f64, _>(StandardNormal) + if a && f < 3 { 1.0 } else { 0.0 }).collect())
        .collect();
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let names: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
    let ranking = rank_features(&names, &refs, &is_a).unwrap();
    let cfg = TrainConfig { hidden_grid: vec![1, 2, 4], ..TrainConfig::default() };
    let mut group = c.benchmark_group("loo_grid_search");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| grid_search(&refs, &is_a, &names, &ranking, &[5, 10], &cfg, black_box(exec)).unwrap())
        });
    }
    group.finish();
}

fn extraction(c: &mut Criterion) {
    let layout = SynthLayout {
        stimuli: [Content::Hall, Content::Sky]
            .into_iter()
            .map(|content| StimulusSlot { content, duration_s: 20.0 })
            .collect(),
        ..SynthLayout::default()
    };
    let data = generate_dataset(2, &layout, &EffectSpec::default()).unwrap();
    let cfg = RunConfig::default();
    let mut group = c.benchmark_group("feature_extraction");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| dataset_features(&data.set, &cfg.preprocess, black_box(exec)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, loo_grid, extraction);
criterion_main!(benches);
