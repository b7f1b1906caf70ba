use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::*;
use crate::par::Execution;
use crate::seed::rng_for;
use crate::selection::rank_features;

fn names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("x{i}")).collect()
}

fn refs(rows: &[Vec<f64>]) -> Vec<&[f64]> {
    rows.iter().map(Vec::as_slice).collect()
}

fn accuracy(m: &MlpModel, rows: &[Vec<f64>], is_a: &[bool]) -> f64 {
    let ok = rows
        .iter()
        .zip(is_a)
        .filter(|(r, a)| m.predict(r).unwrap().is_a() == **a)
        .count();
    ok as f64 / rows.len() as f64
}

fn blobs(seed: u64, n: usize, d: usize, shift: &[f64]) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = rng_for(seed, &[]);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let a = i % 2 == 0;
        let row = (0..d)
            .map(|f| noise.sample(&mut rng) + if a { shift.get(f).copied().unwrap_or(0.0) } else { 0.0 })
            .collect();
        rows.push(row);
        labels.push(a);
    }
    (rows, labels)
}

#[test]
fn posterior_normalization_and_ties() {
    assert_eq!(ClassifierPosterior::from_outputs([0.8, 0.2]).p, [0.8, 0.2]);
    let tie = ClassifierPosterior::from_outputs([0.5, 0.5]);
    assert!(tie.is_a());
    assert_eq!(ClassifierPosterior::from_outputs([0.0, 0.0]).p, [0.5, 0.5]);
    let p = ClassifierPosterior::from_outputs([0.3, 0.9]);
    assert!((p.p[0] + p.p[1] - 1.0).abs() < 1e-12 && !p.is_a());
}

#[test]
fn jacobian_matches_central_differences() {
    let mut rng = rng_for(99, &[]);
    for trial in 0..10 {
        let d = rng.random_range(1..5);
        let h = rng.random_range(1..5);
        let net = Network::random(d, h, 1.5, trial);
        let rows: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let jac = net.jacobian(&refs(&rows));
        for p in 0..net.params.len() {
            let (mut plus, mut minus) = (net.clone(), net.clone());
            plus.params[p] += 1e-5;
            minus.params[p] -= 1e-5;
            for (n, x) in rows.iter().enumerate() {
                let (yp, ym) = (plus.forward(x), minus.forward(x));
                for o in 0..OUTPUTS {
                    let fd = (yp[o] - ym[o]) / 2e-5;
                    let an = jac[(2 * n + o, p)];
                    assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-3), "{fd} vs {an}");
                }
            }
        }
    }
}

#[test]
fn separable_blobs_are_learned() {
    // centers 4 sigma apart along the first axis
    let (rows, labels) = blobs(3, 60, 2, &[4.0, 0.0]);
    let m = train_mlp(&refs(&rows), &labels, &names(2), 2, &TrainConfig::default()).unwrap();
    assert_eq!(accuracy(&m, &rows, &labels), 1.0);
}

fn xor(seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = rng_for(seed, &[]);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..50 {
        for (x, y) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
            rows.push(vec![x + noise.sample(&mut rng), y + noise.sample(&mut rng)]);
            labels.push((x == y) as u8 == 1);
        }
    }
    (rows, labels)
}

#[test]
fn xor_with_four_hidden_units() {
    let (rows, labels) = xor(5);
    let m = train_mlp(&refs(&rows), &labels, &names(2), 4, &TrainConfig::default()).unwrap();
    assert!(accuracy(&m, &rows, &labels) >= 0.95);
}

#[test]
fn identical_inputs_give_priors() {
    let rows = vec![vec![1.0, 2.0]; 30];
    let labels: Vec<bool> = (0..30).map(|i| i < 10).collect();
    let m = train_mlp(&refs(&rows), &labels, &names(2), 3, &TrainConfig::default()).unwrap();
    let p = m.predict(&[1.0, 2.0]).unwrap();
    assert!((p.p[0] - 1.0 / 3.0).abs() < 0.05, "{:?}", p);
}

#[test]
fn loss_never_increases() {
    let (rows, labels) = blobs(8, 30, 3, &[1.0, 0.5, 0.0]);
    let cfg = TrainConfig { max_epochs: 12, ..TrainConfig::default() };
    let trace = loss_trace(&refs(&rows), &labels, 4, &cfg).unwrap();
    assert!(trace.windows(2).all(|w| w[1] <= w[0]), "{trace:?}");
}

#[test]
fn training_is_deterministic_and_seeded() {
    let (rows, labels) = blobs(4, 24, 5, &[1.0]);
    let cfg = TrainConfig::default();
    let a = train_mlp(&refs(&rows), &labels, &names(5), 8, &cfg).unwrap();
    let b = train_mlp(&refs(&rows), &labels, &names(5), 8, &cfg).unwrap();
    assert_eq!(a.network.params, b.network.params);
    let c = train_mlp(&refs(&rows), &labels, &names(5), 8, &cfg.with_seed(2)).unwrap();
    assert_ne!(a.network.params, c.network.params);
}

#[test]
fn affine_feature_rescaling_leaves_posteriors() {
    let (rows, labels) = blobs(6, 20, 3, &[1.5, 0.0, 0.5]);
    let scaled: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| vec![r[0] * 1e3 + 7.0, r[1], r[2] * 0.01 - 3.0])
        .collect();
    let cfg = TrainConfig::default();
    let a = train_mlp(&refs(&rows), &labels, &names(3), 4, &cfg).unwrap();
    let b = train_mlp(&refs(&scaled), &labels, &names(3), 4, &cfg).unwrap();
    for (r, s) in rows.iter().zip(&scaled) {
        let (pa, pb) = (a.predict(r).unwrap(), b.predict(s).unwrap());
        assert!((pa.p[0] - pb.p[0]).abs() < 1e-9, "{pa:?} {pb:?}");
    }
}

#[test]
fn prediction_errors() {
    let (rows, labels) = blobs(1, 10, 2, &[2.0]);
    let m = train_mlp(&refs(&rows), &labels, &names(2), 1, &TrainConfig::default()).unwrap();
    assert!(m.predict(&[1.0]).is_err());
    assert!(m.predict(&[1.0, f64::NAN]).is_err());
    assert!(train_mlp(&refs(&rows), &[true; 10], &names(2), 1, &TrainConfig::default()).is_err());
}

#[test]
fn save_and_load_roundtrip() {
    let (rows, labels) = blobs(2, 12, 3, &[2.0]);
    let m = train_mlp(&refs(&rows), &labels, &names(3), 2, &TrainConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    m.save(&path).unwrap();
    assert_eq!(std::fs::metadata(dir.path().join("model.json.bin")).unwrap().len(), 8 * 14);
    assert_eq!(MlpModel::load(&path).unwrap(), m);
}

#[test]
fn single_point_grid_skips_search() {
    let (rows, labels) = blobs(1, 6, 4, &[1.0]);
    let r = refs(&rows);
    let ranking = rank_features(&names(4), &r, &labels).unwrap();
    let cfg = TrainConfig { hidden_grid: vec![2], ..TrainConfig::default() };
    let g = grid_search(&r, &labels, &names(4), &ranking, &[3], &cfg, Execution::Sequential).unwrap();
    assert_eq!((g.hidden_n, g.k), (2, 3));
    assert!(g.points.is_empty() && g.loo_posteriors.is_none());
    assert!(grid_search(&r[..2], &labels[..2], &names(4), &ranking, &[3], &cfg, Execution::Sequential).is_err());
    assert_eq!(effective_k_grid(&[5, 10, 20, 40], 13), vec![5, 10, 13]);
}

#[test]
fn grid_tie_break_prefers_small_configurations() {
    // identical rows: every configuration scores the same
    let rows = vec![vec![0.0, 0.0, 0.0]; 8];
    let labels: Vec<bool> = (0..8).map(|i| i % 2 == 0).collect();
    let r = refs(&rows);
    let ranking = rank_features(&names(3), &r, &labels).unwrap();
    let cfg = TrainConfig { hidden_grid: vec![4, 1, 2], max_epochs: 5, ..TrainConfig::default() };
    let g = grid_search(&r, &labels, &names(3), &ranking, &[3, 1, 2], &cfg, Execution::Sequential).unwrap();
    assert_eq!((g.hidden_n, g.k), (1, 1));
    assert_eq!(g.points.len(), 9);
}
