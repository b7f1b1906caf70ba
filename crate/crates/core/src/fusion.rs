//! Weighted-product late fusion of the EEG and peripheral posteriors.
//!
//! `score_i = p_eeg_i^w * p_peri_i^(1 - w)`, with posteriors clamped to at
//! least [`MIN_PROBABILITY`] so the log-linear form always holds.

use serde::{Deserialize, Serialize};

use crate::classify::ClassifierPosterior;
use crate::error::{Error, Result};

pub const MIN_PROBABILITY: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionDecision {
    pub weight: f64,
    pub scores: [f64; 2],
    pub is_a: bool,
}

/// Weight grid 0, 0.05, ..., 1.
pub fn default_weight_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

fn power(p: f64, e: f64) -> f64 {
    // 0^0 = 1 falls out of powf, and clamping keeps bases positive anyway.
    if e == 0.0 {
        1.0
    } else {
        p.max(MIN_PROBABILITY).powf(e)
    }
}

pub fn fuse(p_eeg: &ClassifierPosterior, p_peri: &ClassifierPosterior, w: f64) -> Result<FusionDecision> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::invalid(format!("fusion weight {w} outside [0, 1]")));
    }
    let score = |i: usize| power(p_eeg.p[i], w) * power(p_peri.p[i], 1.0 - w);
    let scores = [score(0), score(1)];
    Ok(FusionDecision {
        weight: w,
        scores,
        is_a: scores[0] >= scores[1],
    })
}

/// Fused accuracy at weight `w`. Missing posteriors count as errors.
pub fn fused_accuracy(
    eeg: &[Option<ClassifierPosterior>],
    peri: &[Option<ClassifierPosterior>],
    is_a: &[bool],
    w: f64,
) -> Result<f64> {
    if eeg.len() != is_a.len() || peri.len() != is_a.len() {
        return Err(Error::invalid("posterior and label counts differ"));
    }
    let mut correct = 0usize;
    for ((e, p), a) in eeg.iter().zip(peri).zip(is_a) {
        if let (Some(e), Some(p)) = (e, p) {
            if fuse(e, p, w)?.is_a == *a {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / is_a.len().max(1) as f64)
}

/// Best weight on `grid` by fused accuracy. Ties go to the weight closest
/// to 0.5, then the smaller weight.
pub fn best_weight(
    eeg: &[Option<ClassifierPosterior>],
    peri: &[Option<ClassifierPosterior>],
    is_a: &[bool],
    grid: &[f64],
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::invalid("empty weight grid"));
    }
    let mut best: Option<(f64, f64)> = None;
    for &w in grid {
        let acc = fused_accuracy(eeg, peri, is_a, w)?;
        let better = match best {
            None => true,
            Some((bw, bacc)) => {
                acc > bacc
                    || (acc == bacc
                        && ((w - 0.5).abs() < (bw - 0.5).abs()
                            || ((w - 0.5).abs() == (bw - 0.5).abs() && w < bw)))
            }
        };
        if better {
            best = Some((w, acc));
        }
    }
    Ok(best.expect("non-empty grid").0)
}

/// Weight chosen by leave-one-out fused accuracy on the training split,
/// given each modality's held-out fold posteriors.
pub fn grid_search_weight(
    loo_eeg: &[Option<ClassifierPosterior>],
    loo_peri: &[Option<ClassifierPosterior>],
    is_a: &[bool],
    grid: &[f64],
) -> Result<f64> {
    best_weight(loo_eeg, loo_peri, is_a, grid)
}

/// Oracle weight: the grid value maximizing accuracy on the test examples.
pub fn oracle_weight(
    eeg: &[ClassifierPosterior],
    peri: &[ClassifierPosterior],
    is_a: &[bool],
    grid: &[f64],
) -> Result<f64> {
    let e: Vec<_> = eeg.iter().copied().map(Some).collect();
    let p: Vec<_> = peri.iter().copied().map(Some).collect();
    best_weight(&e, &p, is_a, grid)
}

pub fn weight_rmse(trained: &[f64], oracle: &[f64]) -> Result<f64> {
    if trained.is_empty() || trained.len() != oracle.len() {
        return Err(Error::invalid("weight lists must be non-empty and of equal length"));
    }
    let ss: f64 = trained.iter().zip(oracle).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / trained.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn post(a: f64) -> ClassifierPosterior {
        ClassifierPosterior { p: [a, 1.0 - a] }
    }

    #[test]
    fn direct_evaluation() {
        let d = fuse(&post(0.8), &post(0.3), 0.5).unwrap();
        assert!((d.scores[0] - 0.24f64.sqrt()).abs() < 1e-12);
        assert!((d.scores[1] - 0.14f64.sqrt()).abs() < 1e-12);
        assert!((d.scores[0] - 0.4899).abs() < 1e-4 && (d.scores[1] - 0.3742).abs() < 1e-4);
        assert!(d.is_a);
        assert!(fuse(&post(0.8), &post(0.3), 1.5).is_err());
        assert!(fuse(&post(0.8), &post(0.3), -0.1).is_err());
        // 0^0 = 1
        let z = ClassifierPosterior { p: [0.0, 1.0] };
        assert_eq!(fuse(&z, &post(0.6), 0.0).unwrap().scores, [0.6, 0.4]);
    }

    #[test]
    fn weight_selection() {
        // EEG barely right everywhere, peripheral confidently wrong
        let labels = [true, false, true, false, true, false];
        let eeg: Vec<_> = labels.iter().map(|&a| Some(post(if a { 0.51 } else { 0.49 }))).collect();
        let peri: Vec<_> = labels.iter().map(|&a| Some(post(if a { 0.001 } else { 0.999 }))).collect();
        let grid = default_weight_grid();
        assert_eq!(grid_search_weight(&eeg, &peri, &labels, &grid).unwrap(), 1.0);
        // identical classifiers: every weight ties
        assert_eq!(grid_search_weight(&eeg, &eeg, &labels, &grid).unwrap(), 0.5);
        assert_eq!(grid_search_weight(&eeg, &peri, &labels, &[0.3]).unwrap(), 0.3);
        // tie between 0.4 and 0.6 goes to 0.4
        assert_eq!(best_weight(&eeg, &eeg, &labels, &[0.6, 0.4]).unwrap(), 0.4);
    }

    #[test]
    fn rmse() {
        assert_eq!(weight_rmse(&[0.1, 0.9], &[0.1, 0.9]).unwrap(), 0.0);
        assert!((weight_rmse(&[0.5], &[0.7]).unwrap() - 0.2).abs() < 1e-12);
        assert!(weight_rmse(&[], &[]).is_err());
        assert!(weight_rmse(&[0.1], &[0.1, 0.2]).is_err());
    }

    proptest! {
        #[test]
        fn degenerate_weights_and_log_linearity(a in 0.0f64..=1.0, b in 0.0f64..=1.0, w in 0.0f64..=1.0, c in 1e-3f64..1e3) {
            let (pe, pp) = (post(a), post(b));
            prop_assert_eq!(fuse(&pe, &pp, 1.0).unwrap().is_a, pe.is_a());
            prop_assert_eq!(fuse(&pe, &pp, 0.0).unwrap().is_a, pp.is_a());
            let d = fuse(&pe, &pp, w).unwrap();
            for i in 0..2 {
                let (le, lp) = (pe.p[i].max(MIN_PROBABILITY).ln(), pp.p[i].max(MIN_PROBABILITY).ln());
                prop_assert!((d.scores[i].ln() - (w * le + (1.0 - w) * lp)).abs() < 1e-12 * (1.0 + le.abs() + lp.abs()));
            }
            prop_assert_eq!(d.scores[0] * c >= d.scores[1] * c, d.is_a);
        }
    }
}
