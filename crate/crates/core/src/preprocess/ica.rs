//! Extended-Infomax ICA and EOG-correlated component rejection.
//!
//! Data are centered and sphered (symmetric PCA whitening, scaled by 2), then
//! each iteration is one shuffled pass over the data in small blocks, each
//! block applying the natural-gradient extended-Infomax rule
//!
//! ```text
//! dW = lr * (B I - K tanh(U) U^T - U U^T) W,   U = W Z_block,  B = block size
//! ```
//!
//! where `K` holds +1 for super-Gaussian and -1 for sub-Gaussian components,
//! re-estimated on a random subsample at the start of every pass. The step
//! size starts at `learning_rate / ln(channels)` and is annealed by 0.9
//! whenever successive passes move the weights in directions more than 60
//! degrees apart. The run stops once the squared Frobenius norm of a pass's
//! weight change drops below the tolerance.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::pearson;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcaConfig {
    pub enabled: bool,
    /// Components whose |r| with any EOG channel reaches this are removed.
    pub threshold: f64,
    pub max_iter: usize,
    pub tolerance: f64,
    pub learning_rate: f64,
    pub seed: u64,
    /// Fit on at most this many evenly strided samples; unmixing is applied to all.
    pub max_fit_samples: usize,
}

impl Default for IcaConfig {
    fn default() -> Self {
        IcaConfig {
            enabled: true,
            threshold: 0.6,
            max_iter: 512,
            tolerance: 1e-7,
            learning_rate: 6.5e-4,
            seed: 0x1CA,
            max_fit_samples: 32_768,
        }
    }
}

#[derive(Clone, Debug)]
pub struct IcaDecomposition {
    /// channels x components
    pub mixing: DMatrix<f64>,
    /// components x channels (includes sphering)
    pub unmixing: DMatrix<f64>,
    pub mean: Vec<f64>,
    /// Component time courses over the full input.
    pub sources: Vec<Vec<f64>>,
    /// `artifact_scores[c][e]` = |corr(component c, EOG channel e)|.
    pub artifact_scores: Vec<Vec<f64>>,
    pub rejected: Vec<usize>,
    pub iterations: usize,
}

impl IcaDecomposition {
    pub fn components(&self) -> usize {
        self.unmixing.nrows()
    }

    /// Relative Frobenius error of `unmixing * mixing` against identity.
    pub fn inverse_error(&self) -> f64 {
        let m = self.components();
        let prod = &self.unmixing * &self.mixing;
        (prod - DMatrix::<f64>::identity(m, m)).norm() / (m as f64).sqrt()
    }
}

fn to_matrix(rows: &[Vec<f64>], mean: &[f64], stride: usize) -> DMatrix<f64> {
    let cols = rows[0].len().div_ceil(stride);
    DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c * stride] - mean[r])
}

/// Fit the unmixing matrix. Returns (unmixing incl. sphering, mean, iterations).
pub fn fit(data: &[Vec<f64>], cfg: &IcaConfig) -> Result<(DMatrix<f64>, Vec<f64>, usize)> {
    let chans = data.len();
    if chans < 2 {
        return Err(Error::invalid("ICA needs at least two channels"));
    }
    let len = data[0].len();
    if data.iter().any(|c| c.len() != len) {
        return Err(Error::invalid("ICA channels differ in length"));
    }
    if len < 4 * chans {
        return Err(Error::Degenerate(format!(
            "{len} samples are too few for {chans} channels"
        )));
    }
    let mean: Vec<f64> = data.iter().map(|c| c.iter().sum::<f64>() / len as f64).collect();
    let stride = len.div_ceil(cfg.max_fit_samples.max(chans * 4)).max(1);
    let x = to_matrix(data, &mean, stride);
    let t = x.ncols() as f64;

    let cov = (&x * x.transpose()) / t;
    let eig = SymmetricEigen::new(cov);
    let max_ev = eig.eigenvalues.max();
    let min_ev = eig.eigenvalues.min();
    if !(max_ev > 0.0) || min_ev <= max_ev * 1e-10 {
        return Err(Error::Degenerate(format!(
            "covariance is rank deficient (eigenvalues {min_ev:e}..{max_ev:e})"
        )));
    }
    let inv_sqrt = DVector::from_iterator(chans, eig.eigenvalues.iter().map(|l| 2.0 / l.sqrt()));
    let sphere = &eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose();
    let z = &sphere * &x;
    let frames = z.ncols();
    let block = ((5.0 * (frames as f64).ln()).min(0.3 * frames as f64).ceil() as usize).max(1);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = DMatrix::<f64>::identity(chans, chans)
        + DMatrix::from_fn(chans, chans, |_, _| rng.random_range(-0.01..0.01));

    let mut lr = cfg.learning_rate / (chans as f64).ln();
    let mut restarts = 0;
    'restart: loop {
        let mut w = init.clone();
        let mut order: Vec<usize> = (0..frames).collect();
        let mut prev: Option<DMatrix<f64>> = None;
        for iter in 1..=cfg.max_iter {
            let start = w.clone();
            let signs = kurtosis_signs(&w, &z, &mut rng);
            order.shuffle(&mut rng);
            for chunk in order.chunks(block) {
                let zb = DMatrix::from_fn(chans, chunk.len(), |r, c| z[(r, chunk[c])]);
                let u = &w * &zb;
                let yu = u.map(f64::tanh) * u.transpose();
                let mut g = DMatrix::<f64>::identity(chans, chans) * chunk.len() as f64 - &u * u.transpose();
                for i in 0..chans {
                    for j in 0..chans {
                        g[(i, j)] -= signs[i] * yu[(i, j)];
                    }
                }
                w += (g * &w) * lr;
            }
            let delta = &w - &start;
            let change = delta.norm_squared();
            if !change.is_finite() || w.amax() > BLOWUP {
                restarts += 1;
                if restarts > 10 {
                    return Err(Error::NoConvergence { iterations: iter });
                }
                lr *= 0.8;
                continue 'restart;
            }
            if change < cfg.tolerance {
                return Ok((&w * &sphere, mean, iter));
            }
            if let Some(p) = &prev {
                let cos = p.dot(&delta) / (p.norm() * delta.norm());
                if cos < ANNEAL_COS {
                    lr *= ANNEAL_STEP;
                }
            }
            prev = Some(delta);
        }
        return Err(Error::NoConvergence {
            iterations: cfg.max_iter,
        });
    }
}

const BLOWUP: f64 = 1e9;
const ANNEAL_STEP: f64 = 0.9;
/// cos(60 degrees)
const ANNEAL_COS: f64 = 0.5;
const KURTOSIS_SAMPLES: usize = 6000;

/// +1 for components that look super-Gaussian, -1 for sub-Gaussian, from
/// E[sech^2] E[u^2] - E[tanh(u) u] on a random subsample.
fn kurtosis_signs(w: &DMatrix<f64>, z: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let frames = z.ncols();
    let idx: Vec<usize> = if frames <= KURTOSIS_SAMPLES {
        (0..frames).collect()
    } else {
        (0..KURTOSIS_SAMPLES).map(|_| rng.random_range(0..frames)).collect()
    };
    let sub = DMatrix::from_fn(z.nrows(), idx.len(), |r, c| z[(r, idx[c])]);
    let u = w * sub;
    let n = idx.len() as f64;
    (0..u.nrows())
        .map(|i| {
            let (mut sech2, mut u2, mut thu) = (0.0, 0.0, 0.0);
            for &a in u.row(i).iter() {
                let b = a.tanh();
                sech2 += 1.0 - b * b;
                u2 += a * a;
                thu += b * a;
            }
            if (sech2 / n) * (u2 / n) - thu / n >= 0.0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect()
}

/// Decompose `eeg`, drop every component correlated with an EOG channel at or
/// above `cfg.threshold`, and reconstruct the channels from the rest.
///
/// Reconstruction subtracts the rejected components' back-projection, so
/// with nothing rejected the output equals the input; with everything rejected
/// each channel collapses to its mean.
pub fn ica_artifact_reject(
    eeg: &[Vec<f64>],
    eog: &[Vec<f64>],
    cfg: &IcaConfig,
) -> Result<(Vec<Vec<f64>>, IcaDecomposition)> {
    if eeg.len() < 2 {
        return Err(Error::invalid("artifact rejection needs at least two EEG channels"));
    }
    if eog.is_empty() {
        return Err(Error::invalid("artifact rejection needs at least one EOG channel"));
    }
    let len = eeg[0].len();
    if eeg.iter().chain(eog).any(|c| c.len() != len) {
        return Err(Error::invalid("EEG and EOG channels must share one length"));
    }
    if !(0.0..=1.0).contains(&cfg.threshold) {
        return Err(Error::invalid(format!("threshold {} outside [0, 1]", cfg.threshold)));
    }

    let (unmixing, mean, iterations) = fit(eeg, cfg)?;
    let mixing = unmixing
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("unmixing matrix is singular".into()))?;

    let full = to_matrix(eeg, &mean, 1);
    let s = &unmixing * &full;
    let sources: Vec<Vec<f64>> = s.row_iter().map(|r| r.iter().copied().collect()).collect();
    let artifact_scores: Vec<Vec<f64>> = sources
        .iter()
        .map(|src| eog.iter().map(|e| pearson(src, e).map_or(0.0, f64::abs)).collect())
        .collect();
    let rejected: Vec<usize> = artifact_scores
        .iter()
        .enumerate()
        .filter(|(_, sc)| sc.iter().any(|v| *v >= cfg.threshold))
        .map(|(i, _)| i)
        .collect();

    let mut cleaned: Vec<Vec<f64>> = eeg.to_vec();
    for &c in &rejected {
        for (ch, out) in cleaned.iter_mut().enumerate() {
            let a = mixing[(ch, c)];
            for (o, v) in out.iter_mut().zip(&sources[c]) {
                *o -= a * v;
            }
        }
    }

    Ok((
        cleaned,
        IcaDecomposition {
            mixing,
            unmixing,
            mean,
            sources,
            artifact_scores,
            rejected,
            iterations,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::ocular_mixture;

    fn max_abs_corr(eeg: &[Vec<f64>], eog: &[f64]) -> f64 {
        eeg.iter().map(|c| pearson(c, eog).map_or(0.0, f64::abs)).fold(0.0, f64::max)
    }

    #[test]
    fn blink_component_is_removed() {
        let mix = ocular_mixture(7, 5120);
        let before = max_abs_corr(&mix.eeg, &mix.eog[0]);
        assert!(before >= 0.6, "before {before}");
        let (clean, dec) = ica_artifact_reject(&mix.eeg, &mix.eog, &IcaConfig::default()).unwrap();
        let after = max_abs_corr(&clean, &mix.eog[0]);
        assert!(after <= 0.1, "after {after}");
        assert_eq!(dec.rejected.len(), 1);
        assert!(dec.inverse_error() < 1e-6);
    }

    #[test]
    fn silent_eog_rejects_nothing() {
        let mix = ocular_mixture(3, 4096);
        let zero = vec![vec![0.0; 4096]];
        let (clean, dec) = ica_artifact_reject(&mix.eeg, &zero, &IcaConfig::default()).unwrap();
        assert!(dec.rejected.is_empty());
        for (a, b) in clean.iter().zip(&mix.eeg) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-6 * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn zero_threshold_rejects_everything() {
        let mix = ocular_mixture(11, 4096);
        // Center the channels so the documented mean-only output is zero.
        let centered: Vec<Vec<f64>> = mix
            .eeg
            .iter()
            .map(|c| {
                let m = c.iter().sum::<f64>() / c.len() as f64;
                c.iter().map(|v| v - m).collect()
            })
            .collect();
        let cfg = IcaConfig {
            threshold: 0.0,
            ..IcaConfig::default()
        };
        let (clean, dec) = ica_artifact_reject(&centered, &mix.eog, &cfg).unwrap();
        assert_eq!(dec.rejected.len(), dec.components());
        assert!(clean.iter().flatten().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn reconstruction_and_inverse_are_exact() {
        let mix = ocular_mixture(5, 4096);
        let (unmixing, mean, _) = fit(&mix.eeg, &IcaConfig::default()).unwrap();
        let mixing = unmixing.clone().try_inverse().unwrap();
        let x = to_matrix(&mix.eeg, &mean, 1);
        let back = &mixing * (&unmixing * &x);
        assert!((back - &x).norm() / x.norm() < 1e-6);
    }

    #[test]
    fn degenerate_inputs_fail() {
        let a: Vec<f64> = (0..2000).map(|i| (i as f64 * 0.1).sin()).collect();
        let rank_one = vec![a.clone(), a.iter().map(|v| 2.0 * v).collect()];
        assert!(matches!(
            fit(&rank_one, &IcaConfig::default()),
            Err(Error::Degenerate(_))
        ));
        assert!(ica_artifact_reject(std::slice::from_ref(&a), std::slice::from_ref(&a), &IcaConfig::default()).is_err());
        assert!(ica_artifact_reject(&rank_one, &[], &IcaConfig::default()).is_err());
    }

    #[test]
    fn iteration_cap_is_reported() {
        let mix = ocular_mixture(2, 4096);
        let cfg = IcaConfig {
            max_iter: 2,
            ..IcaConfig::default()
        };
        match fit(&mix.eeg, &cfg) {
            Err(Error::NoConvergence { iterations }) => assert_eq!(iterations, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
