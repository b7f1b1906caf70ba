//! Inner leave-one-out grid search over hidden size and feature count.

use serde::{Deserialize, Serialize};

use super::mlp::{train_mlp, ClassifierPosterior, TrainConfig};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::selection::Ranking;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub hidden_n: usize,
    pub k: usize,
    pub loo_accuracy: f64,
    pub failed_folds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub hidden_n: usize,
    pub k: usize,
    /// Empty when the grid had a single point and no search ran.
    pub points: Vec<GridPoint>,
    /// Held-out posterior of every training example under the chosen
    /// configuration; `None` where that fold failed to train.
    pub loo_posteriors: Option<Vec<Option<ClassifierPosterior>>>,
}

/// Feature counts clamped to the number of available features, deduplicated.
pub fn effective_k_grid(k_grid: &[usize], n_features: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = k_grid.iter().map(|&k| k.clamp(1, n_features.max(1))).collect();
    ks.sort_unstable();
    ks.dedup();
    ks
}

/// Leave-one-out posteriors of an `(hidden_n, features)` configuration.
/// `features` are column indices into `rows`.
pub fn loo_posteriors(
    rows: &[&[f64]],
    is_a: &[bool],
    names: &[String],
    features: &[usize],
    hidden_n: usize,
    cfg: &TrainConfig,
    exec: Execution,
) -> Vec<Option<ClassifierPosterior>> {
    let projected: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| features.iter().map(|&f| r[f]).collect())
        .collect();
    let sub_names: Vec<String> = features.iter().map(|&f| names[f].clone()).collect();
    exec.map_range(rows.len(), |held| {
        let train: Vec<&[f64]> = projected
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != held)
            .map(|(_, r)| r.as_slice())
            .collect();
        let labels: Vec<bool> = is_a
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != held)
            .map(|(_, a)| *a)
            .collect();
        match train_mlp(&train, &labels, &sub_names, hidden_n, cfg)
            .and_then(|m| m.predict(&projected[held]))
        {
            Ok(p) => Some(p),
            Err(e) => {
                log::warn!("inner fold {held} (h={hidden_n}, k={}) failed: {e}", features.len());
                None
            }
        }
    })
}

pub fn loo_accuracy(posteriors: &[Option<ClassifierPosterior>], is_a: &[bool]) -> f64 {
    let correct = posteriors
        .iter()
        .zip(is_a)
        .filter(|(p, a)| p.is_some_and(|p| p.is_a() == **a))
        .count();
    correct as f64 / is_a.len().max(1) as f64
}

/// Pick `(hidden_n, k)` maximizing leave-one-out accuracy on the training
/// rows, taking the top-k features of the fixed `ranking` for every fold.
/// Ties go to the smaller hidden size, then the smaller k.
pub fn grid_search(
    rows: &[&[f64]],
    is_a: &[bool],
    names: &[String],
    ranking: &Ranking,
    k_grid: &[usize],
    cfg: &TrainConfig,
    exec: Execution,
) -> Result<GridOutcome> {
    if rows.len() < 3 {
        return Err(Error::invalid(format!(
            "grid search needs at least 3 training examples, got {}",
            rows.len()
        )));
    }
    let mut hidden = cfg.hidden_grid.clone();
    hidden.sort_unstable();
    hidden.dedup();
    let ks = effective_k_grid(k_grid, names.len());
    if hidden.is_empty() || ks.is_empty() {
        return Err(Error::invalid("empty grid"));
    }
    if hidden.len() == 1 && ks.len() == 1 {
        return Ok(GridOutcome {
            hidden_n: hidden[0],
            k: ks[0],
            points: Vec::new(),
            loo_posteriors: None,
        });
    }
    let configs: Vec<(usize, usize)> = hidden
        .iter()
        .flat_map(|&h| ks.iter().map(move |&k| (h, k)))
        .collect();
    let results = exec.map(configs, |(h, k)| {
        let post = loo_posteriors(rows, is_a, names, ranking.top(k), h, cfg, Execution::Sequential);
        (h, k, post)
    });
    let mut best: Option<usize> = None;
    let mut points = Vec::with_capacity(results.len());
    for (i, (h, k, post)) in results.iter().enumerate() {
        let acc = loo_accuracy(post, is_a);
        points.push(GridPoint {
            hidden_n: *h,
            k: *k,
            loo_accuracy: acc,
            failed_folds: post.iter().filter(|p| p.is_none()).count(),
        });
        if best.is_none_or(|b| acc > points[b].loo_accuracy) {
            best = Some(i);
        }
    }
    let b = best.expect("non-empty grid");
    let (h, k, post) = results.into_iter().nth(b).expect("best index in range");
    Ok(GridOutcome {
        hidden_n: h,
        k,
        points,
        loo_posteriors: Some(post),
    })
}
