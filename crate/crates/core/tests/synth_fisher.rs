//! Fisher scores of features extracted from generated data: the null effect
//! looks like the null, a gamma effect is found on its electrodes.

use std::collections::BTreeSet;

use qoe_core::commands::dataset_features;
use qoe_core::features::SegmentFeatures;
use qoe_core::model::{eeg_feature_names, Content, DynamicRange, FeatureModality};
use qoe_core::par::Execution;
use qoe_core::preprocess::PreprocessConfig;
use qoe_core::selection::{rank_features, Ranking};
use qoe_core::synth::{generate_dataset_with, EffectSpec, SynthLayout};

const SEEDS: u64 = 100;

// Ocular rejection is off: the blink model is the same in both classes and
// the fits would dominate the runtime.
fn features(subjects: usize, effect: &EffectSpec) -> Vec<SegmentFeatures> {
    let mut cfg = PreprocessConfig::default();
    cfg.ica.enabled = false;
    let data = generate_dataset_with(subjects, &SynthLayout::default(), effect, Execution::Sequential).unwrap();
    dataset_features(&data.set, &cfg, Execution::Sequential).unwrap()
}

fn ranking(feats: &[SegmentFeatures], is_a: impl Fn(&SegmentFeatures) -> bool) -> Ranking {
    let rows: Vec<&[f64]> = feats.iter().map(|f| f.get(FeatureModality::Eeg).unwrap().values()).collect();
    let labels: Vec<bool> = feats.iter().map(is_a).collect();
    rank_features(eeg_feature_names(), &rows, &labels).unwrap()
}

fn is_hdr(f: &SegmentFeatures) -> bool {
    f.labels.dynamic_range == DynamicRange::Tmhdr
}

// Same per-content segment counts and per-stimulus grouping as the real
// labels, so under no effect both labelings give identically distributed J.
fn is_pseudo(f: &SegmentFeatures) -> bool {
    let flip = matches!(f.labels.content, Content::Objects | Content::Window);
    is_hdr(f) != flip
}

/// Two-sample Kolmogorov-Smirnov p-value from the Kolmogorov tail with
/// Stephens' small-sample correction.
fn ks_p(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = (n * m / (n + m)).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * d;
    if lambda < 0.2 {
        // The alternating series is numerically 1 here but converges slowly.
        return 1.0;
    }
    let q: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    q.clamp(0.0, 1.0)
}

#[test]
fn ks_reference_values() {
    // D = 0.5 with 10 vs 10 samples; Kolmogorov tail at the corrected
    // statistic (scipy kstwobign.sf) is 0.110840.
    let a: Vec<f64> = (0..10).map(f64::from).collect();
    let b: Vec<f64> = (5..15).map(f64::from).collect();
    assert!((ks_p(a.clone(), b) - 0.110840).abs() < 1e-5);
    assert!(ks_p(a.clone(), a) > 0.999);
}

#[test]
fn null_effect_gives_null_fisher_scores() {
    let n_features = eeg_feature_names().len();
    let per_seed = Execution::default().map_range(2 * SEEDS as usize, |i| {
        let seed = i as u64;
        let feats = features(1, &EffectSpec::null(1000 + seed));
        let feature = (seed % SEEDS) as usize * 37 % n_features;
        if seed < SEEDS {
            ranking(&feats, is_hdr).scores[feature].j
        } else {
            ranking(&feats, is_pseudo).scores[feature].j
        }
    });
    let (real, null) = per_seed.split_at(SEEDS as usize);
    let p = ks_p(real.to_vec(), null.to_vec());
    assert!(p > 0.01, "KS p = {p}");
}

#[test]
fn gamma_effect_electrodes_rank_top() {
    let effect = EffectSpec::default();
    let names = eeg_feature_names();
    let expected: BTreeSet<usize> = effect
        .electrodes
        .iter()
        .map(|e| names.iter().position(|n| *n == format!("{e}_gamma")).unwrap())
        .collect();
    let hits = Execution::default()
        .map_range(SEEDS as usize, |seed| {
            let feats = features(5, &effect.clone().with_seed(2000 + seed as u64));
            let subjects: BTreeSet<&str> = feats.iter().map(|f| f.segment.subject_id.as_str()).collect();
            let mut mean_j = vec![0.0; names.len()];
            for s in &subjects {
                let own: Vec<SegmentFeatures> =
                    feats.iter().filter(|f| f.segment.subject_id == *s).cloned().collect();
                for (m, score) in mean_j.iter_mut().zip(&ranking(&own, is_hdr).scores) {
                    *m += score.j / subjects.len() as f64;
                }
            }
            let mut order: Vec<usize> = (0..names.len()).collect();
            order.sort_by(|a, b| mean_j[*b].total_cmp(&mean_j[*a]));
            order[..8].iter().copied().collect::<BTreeSet<usize>>() == expected
        })
        .into_iter()
        .filter(|h| *h)
        .count();
    assert!(hits >= 90, "effect electrodes ranked top-8 in {hits}/{SEEDS} seeds");
}
