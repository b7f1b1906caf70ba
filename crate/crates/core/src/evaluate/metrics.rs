//! Classification metrics and the significance test against chance.

use crate::error::{Error, Result};
use crate::model::ConfusionCounts;
use crate::stats::{mean, sample_std, t_two_tailed};

fn check(c: &ConfusionCounts) -> Result<()> {
    if c.number_of_a() == 0 || c.number_of_b() == 0 {
        return Err(Error::invalid("metric needs examples of both classes"));
    }
    Ok(())
}

pub fn accuracy(c: &ConfusionCounts) -> f64 {
    (c.true_a + c.true_b) as f64 / c.total().max(1) as f64
}

/// Mean of the two per-class recalls.
pub fn balanced_accuracy(c: &ConfusionCounts) -> Result<f64> {
    check(c)?;
    Ok(0.5 * (c.true_a as f64 / c.number_of_a() as f64 + c.true_b as f64 / c.number_of_b() as f64))
}

fn f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    let den = 2 * tp + fp + fn_;
    if den == 0 {
        0.0
    } else {
        2.0 * tp as f64 / den as f64
    }
}

/// Mean of F1 with A positive and F1 with B positive.
pub fn symmetric_f_measure(c: &ConfusionCounts) -> Result<f64> {
    check(c)?;
    let fa = f1(c.true_a, c.false_b, c.false_a);
    let fb = f1(c.true_b, c.false_a, c.false_b);
    Ok(0.5 * (fa + fb))
}

/// Two-tailed one-sample t-test of `values` against `chance`.
pub fn t_test_vs_chance(values: &[f64], chance: f64) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::invalid("t-test against chance needs at least two values"));
    }
    let m = mean(values);
    let sd = sample_std(values);
    if sd == 0.0 {
        if m == chance {
            return Ok(1.0);
        }
        log::info!("zero-variance metrics (mean {m}) against chance {chance}: p set to 0");
        return Ok(0.0);
    }
    let t = (m - chance) / (sd / (values.len() as f64).sqrt());
    Ok(t_two_tailed(t, (values.len() - 1) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cc(true_a: u64, false_a: u64, true_b: u64, false_b: u64) -> ConfusionCounts {
        ConfusionCounts { true_a, false_a, true_b, false_b }
    }

    #[test]
    fn direct_evaluation() {
        assert_eq!(balanced_accuracy(&cc(10, 0, 5, 0)).unwrap(), 1.0);
        assert_eq!(balanced_accuracy(&cc(8, 0, 0, 2)).unwrap(), 0.5);
        assert!((balanced_accuracy(&cc(8, 2, 3, 2)).unwrap() - 0.7).abs() < 1e-12);
        assert!((symmetric_f_measure(&cc(8, 2, 3, 2)).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(symmetric_f_measure(&cc(4, 0, 4, 0)).unwrap(), 1.0);
        assert!((symmetric_f_measure(&cc(5, 0, 0, 5)).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(balanced_accuracy(&cc(0, 0, 3, 1)).is_err());
        assert!(symmetric_f_measure(&cc(3, 1, 0, 0)).is_err());
    }

    #[test]
    fn balanced_equals_plain_on_balanced_sets() {
        for ta in 0..=6 {
            for tb in 0..=6 {
                let c = cc(ta, 6 - ta, tb, 6 - tb);
                assert!((balanced_accuracy(&c).unwrap() - accuracy(&c)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn chance_test() {
        assert_eq!(t_test_vs_chance(&[0.5; 4], 0.5).unwrap(), 1.0);
        assert_eq!(t_test_vs_chance(&[0.7; 4], 0.5).unwrap(), 0.0);
        assert!(t_test_vs_chance(&[0.9, 0.92, 0.88, 0.91], 0.5).unwrap() < 1e-3);
        assert!(t_test_vs_chance(&[0.9], 0.5).is_err());
        // t = 2 with 10 degrees of freedom: scipy.stats.t.sf(2, 10) * 2
        let v: Vec<f64> = (0..11).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let m = v.iter().sum::<f64>() / 11.0;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 10.0).sqrt();
        let shift = 2.0 * sd / 11f64.sqrt() - m;
        let vals: Vec<f64> = v.iter().map(|x| x + shift + 0.5).collect();
        assert!((t_test_vs_chance(&vals, 0.5).unwrap() - 0.07338803477074039).abs() < 1e-9);
    }
}
