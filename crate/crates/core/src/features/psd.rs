//! Welch power spectral density and band power.

use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Band;

pub const WELCH_WINDOW: usize = 256;
pub const WELCH_OVERLAP: f64 = 0.5;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// One-sided power spectral density on a uniform grid from 0 to Nyquist.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Psd {
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
}

impl Psd {
    pub fn resolution(&self) -> f64 {
        self.frequencies.get(1).copied().unwrap_or(0.0)
    }

    /// Integral of the density over all frequencies.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.resolution()
    }
}

/// Periodic Hann window, as used for spectral estimation.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Hann-windowed, mean-removed, overlapped and averaged periodogram scaled
/// as a one-sided density (units²/Hz).
pub fn welch_psd(x: &[f64], fs: f64, window_len: usize, overlap_fraction: f64) -> Result<Psd> {
    if window_len < 2 {
        return Err(Error::invalid("Welch window must hold at least 2 samples"));
    }
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(Error::invalid("Welch overlap must lie in [0, 1)"));
    }
    if x.len() < window_len {
        return Err(Error::TooShort(format!(
            "signal of {} samples is shorter than the {window_len}-sample Welch window",
            x.len()
        )));
    }
    let step = window_len - (window_len as f64 * overlap_fraction).round() as usize;
    let step = step.max(1);
    let window = hann(window_len);
    let norm: f64 = window.iter().map(|w| w * w).sum::<f64>() * fs;
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(window_len));
    let bins = window_len / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut buf = vec![Complex::new(0.0, 0.0); window_len];
    let mut count = 0usize;
    let mut start = 0;
    while start + window_len <= x.len() {
        let chunk = &x[start..start + window_len];
        let m = chunk.iter().sum::<f64>() / window_len as f64;
        for ((b, v), w) in buf.iter_mut().zip(chunk).zip(&window) {
            *b = Complex::new((v - m) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm_sqr();
        }
        count += 1;
        start += step;
    }
    let even = window_len.is_multiple_of(2);
    let power = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let one_sided = if k == 0 || (even && k == bins - 1) { 1.0 } else { 2.0 };
            one_sided * a / (norm * count as f64)
        })
        .collect();
    let frequencies = (0..bins).map(|k| k as f64 * fs / window_len as f64).collect();
    Ok(Psd { frequencies, power })
}

/// Sum of the PSD bins whose frequency lies in `[low, high]`, both ends
/// included. On the 1 Hz grid this equals the integrated band power.
pub fn band_power_range(psd: &Psd, low: f64, high: f64) -> Result<f64> {
    let nyquist = psd.frequencies.last().copied().unwrap_or(0.0);
    if low < 0.0 || high > nyquist + 1e-9 || low > high {
        return Err(Error::invalid(format!(
            "band [{low}, {high}] Hz lies outside the PSD range [0, {nyquist}] Hz"
        )));
    }
    let tol = 1e-9 * psd.resolution().max(1.0);
    Ok(psd
        .frequencies
        .iter()
        .zip(&psd.power)
        .filter(|(f, _)| **f >= low - tol && **f <= high + tol)
        .map(|(_, p)| p)
        .sum())
}

pub fn band_power(psd: &Psd, band: Band) -> Result<f64> {
    let (lo, hi) = band.range();
    band_power_range(psd, lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn sine(freq: f64, amp: f64, secs: f64) -> Vec<f64> {
        (0..(secs * 256.0) as usize)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / 256.0).sin())
            .collect()
    }

    /// Direct O(n²) DFT of one Hann-windowed frame, independent of rustfft.
    fn dft_power(frame: &[f64], k: usize) -> f64 {
        let n = frame.len();
        let w = hann(n);
        let (mut re, mut im) = (0.0, 0.0);
        for (i, (v, wi)) in frame.iter().zip(&w).enumerate() {
            let ph = -2.0 * PI * (k * i) as f64 / n as f64;
            re += v * wi * ph.cos();
            im += v * wi * ph.sin();
        }
        re * re + im * im
    }

    #[test]
    fn matches_direct_dft_on_a_single_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut x: Vec<f64> = (0..256).map(|_| rng.random::<f64>() - 0.5).collect();
        let m = x.iter().sum::<f64>() / 256.0;
        x.iter_mut().for_each(|v| *v -= m);
        let psd = welch_psd(&x, 256.0, 256, 0.5).unwrap();
        let s2: f64 = hann(256).iter().map(|w| w * w).sum();
        for k in [1usize, 7, 64, 127] {
            let expected = 2.0 * dft_power(&x, k) / (256.0 * s2);
            assert!((psd.power[k] - expected).abs() < 1e-12 * expected.max(1.0));
        }
    }

    #[test]
    fn ten_hz_sinusoid_concentrates_in_alpha() {
        let psd = welch_psd(&sine(10.0, 1.0, 10.0), 256.0, 256, 0.5).unwrap();
        assert_eq!(psd.resolution(), 1.0);
        assert_eq!(psd.frequencies.len(), 129);
        let peak = (0..psd.power.len())
            .max_by(|a, b| psd.power[*a].total_cmp(&psd.power[*b]))
            .unwrap();
        assert_eq!(peak, 10);
        let total = band_power_range(&psd, 3.0, 47.0).unwrap();
        let alpha = band_power(&psd, Band::Alpha).unwrap();
        assert!(alpha / total >= 0.95);
        let others: f64 = [Band::Theta, Band::Beta, Band::Gamma]
            .iter()
            .map(|b| band_power(&psd, *b).unwrap())
            .sum();
        assert!(alpha > 10.0 * others);
        // A²/2 for unit amplitude
        assert!((psd.total_power() - 0.5).abs() < 0.01);
    }

    #[test]
    fn zero_and_flat_psd() {
        let psd = welch_psd(&vec![0.0; 2560], 256.0, 256, 0.5).unwrap();
        assert!(psd.power.iter().all(|p| *p == 0.0));
        assert_eq!(band_power(&psd, Band::Gamma).unwrap(), 0.0);
        let flat = Psd {
            frequencies: (0..129).map(f64::from).collect(),
            power: vec![1.0; 129],
        };
        assert_eq!(band_power(&flat, Band::Alpha).unwrap(), 6.0);
        assert_eq!(band_power(&flat, Band::Theta).unwrap(), 5.0);
        assert_eq!(band_power(&flat, Band::Beta).unwrap(), 16.0);
        assert_eq!(band_power(&flat, Band::Gamma).unwrap(), 18.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(welch_psd(&[0.0; 100], 256.0, 256, 0.5), Err(Error::TooShort(_))));
        let psd = welch_psd(&vec![0.0; 256], 64.0, 256, 0.5).unwrap();
        assert!(band_power(&psd, Band::Gamma).is_err());
    }

    #[test]
    fn white_noise_is_flat_and_integrates_to_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut mean_psd = vec![0.0; 129];
        let draws = 100;
        for _ in 0..draws {
            let x: Vec<f64> = (0..2560).map(|_| rng.sample(StandardNormal)).collect();
            let psd = welch_psd(&x, 256.0, 256, 0.5).unwrap();
            let var = crate::stats::sample_variance(&x);
            assert!((psd.total_power() / var - 1.0).abs() < 0.05);
            for (m, p) in mean_psd.iter_mut().zip(&psd.power) {
                *m += p / draws as f64;
            }
        }
        // density of unit-variance white noise at 256 Hz is 1/128 per Hz
        let level = 1.0 / 128.0;
        for p in &mean_psd[3..=47] {
            assert!((p / level - 1.0).abs() < 0.25, "{p}");
        }
    }

    #[test]
    fn scaling_is_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..2560).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let base = welch_psd(&x, 256.0, 256, 0.5).unwrap();
        for c in [0.1, 3.0, 250.0] {
            let y: Vec<f64> = x.iter().map(|v| v * c).collect();
            let psd = welch_psd(&y, 256.0, 256, 0.5).unwrap();
            for b in Band::ALL {
                let r = band_power(&psd, b).unwrap() / band_power(&base, b).unwrap();
                assert!((r / (c * c) - 1.0).abs() < 1e-6);
            }
        }
    }
}
