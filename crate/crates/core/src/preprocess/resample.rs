//! Rational-ratio polyphase resampling with a Kaiser-windowed sinc low-pass.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const KAISER_BETA: f64 = 8.6;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn ratio(source: f64, target: f64) -> Result<(usize, usize)> {
    let scale = if source.fract() == 0.0 && target.fract() == 0.0 { 1.0 } else { 1000.0 };
    let (s, t) = ((source * scale).round() as u64, (target * scale).round() as u64);
    if s == 0 || t == 0 {
        return Err(Error::invalid("sample rates must be positive"));
    }
    let g = gcd(s, t);
    let (up, down) = (t / g, s / g);
    if up > 4096 {
        return Err(Error::invalid(format!(
            "resampling ratio {target}/{source} needs an interpolation factor of {up}"
        )));
    }
    Ok((up as usize, down as usize))
}

/// Anti-aliasing filter taps for upsampling by `up` then decimating by `down`.
/// Each polyphase branch sums to one, so constants pass exactly.
fn design_taps(up: usize, down: usize) -> Vec<f64> {
    // Normalized to the upsampled rate: cutoff at the output Nyquist,
    // transition band 10% of the output rate wide.
    let fs_up = up as f64;
    let out_rate = up as f64 / down as f64;
    let cutoff = 0.5 * out_rate.min(1.0);
    let transition = 0.1 * out_rate.min(1.0);
    let atten = 0.1102f64.recip() * KAISER_BETA + 8.7;
    let dw = 2.0 * PI * transition / fs_up;
    let mut n = ((atten - 7.95) / (2.285 * dw)).ceil() as usize + 1;
    if n.is_multiple_of(2) {
        n += 1;
    }
    let mid = (n - 1) as f64 / 2.0;
    let fc = cutoff / fs_up;
    let i0_beta = bessel_i0(KAISER_BETA);
    let mut h: Vec<f64> = (0..n)
        .map(|k| {
            let t = k as f64 - mid;
            let sinc = if t == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * t).sin() / (PI * t)
            };
            let r = 2.0 * k as f64 / (n - 1) as f64 - 1.0;
            let w = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
            sinc * w
        })
        .collect();
    for phase in 0..up {
        let s: f64 = h.iter().skip(phase).step_by(up).sum();
        if s.abs() > 0.0 {
            for v in h.iter_mut().skip(phase).step_by(up) {
                *v /= s;
            }
        }
    }
    h
}

/// Resample `x` from `source` Hz to `target` Hz. Only downsampling (or the
/// identity) is supported. Output length is `round(len * target / source)`.
pub fn resample(x: &[f64], source: f64, target: f64) -> Result<Vec<f64>> {
    if !(source > 0.0 && target > 0.0) {
        return Err(Error::invalid("sample rates must be positive"));
    }
    if source < target {
        return Err(Error::invalid(format!(
            "upsampling from {source} Hz to {target} Hz is not supported"
        )));
    }
    if source == target {
        return Ok(x.to_vec());
    }
    let (up, down) = ratio(source, target)?;
    let h = design_taps(up, down);
    let half = (h.len() - 1) / 2;
    let n = x.len();
    let out_len = ((n as f64) * up as f64 / down as f64).round() as usize;
    if n == 0 {
        return Ok(Vec::new());
    }

    // Odd reflection about the end points keeps constants and ramps intact.
    let sample = |i: isize| -> f64 {
        if i < 0 {
            let j = ((-i) as usize).min(n - 1);
            2.0 * x[0] - x[j]
        } else if i as usize >= n {
            let j = (i as usize - (n - 1)).min(n - 1);
            2.0 * x[n - 1] - x[n - 1 - j]
        } else {
            x[i as usize]
        }
    };

    let mut y = Vec::with_capacity(out_len);
    for m in 0..out_len {
        let pos = (m * down + half) as isize;
        let first = pos.rem_euclid(up as isize) as usize;
        let mut acc = 0.0;
        let mut k = first;
        while k < h.len() {
            let j = (pos - k as isize) / up as isize;
            acc += h[k] * sample(j);
            k += up;
        }
        y.push(acc);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Amplitude of `freq` via a direct DFT projection over whole cycles in the
    /// middle half of the signal.
    fn amplitude(x: &[f64], freq: f64, fs: f64) -> f64 {
        let (lo, hi) = (x.len() / 4, 3 * x.len() / 4);
        let (mut re, mut im) = (0.0, 0.0);
        for (i, v) in x.iter().enumerate().take(hi).skip(lo) {
            let ph = 2.0 * PI * freq * i as f64 / fs;
            re += v * ph.cos();
            im += v * ph.sin();
        }
        2.0 * (re * re + im * im).sqrt() / (hi - lo) as f64
    }

    #[test]
    fn constant_is_preserved() {
        let x = vec![2.5; 4096];
        let y = resample(&x, 1024.0, 256.0).unwrap();
        assert_eq!(y.len(), 1024);
        assert!(y.iter().all(|v| (v - 2.5).abs() < 1e-9));
    }

    #[test]
    fn ten_hz_sine_keeps_amplitude() {
        let fs = 1024.0;
        let x: Vec<f64> = (0..4096).map(|i| (2.0 * PI * 10.0 * i as f64 / fs).sin()).collect();
        let y = resample(&x, fs, 256.0).unwrap();
        let a_in = amplitude(&x, 10.0, fs);
        let a_out = amplitude(&y, 10.0, 256.0);
        assert!((a_out / a_in - 1.0).abs() < 0.01, "{a_in} -> {a_out}");
    }

    #[test]
    fn passband_edge_is_flat_and_stopband_removed() {
        for (fs, f) in [(512.0, 115.0), (1024.0, 100.0), (500.0, 110.0)] {
            let n = (fs * 8.0) as usize;
            let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect();
            let y = resample(&x, fs, 256.0).unwrap();
            let a = amplitude(&y, f, 256.0);
            assert!((a - 1.0).abs() < 0.01, "{fs} Hz source, {f} Hz tone: {a}");
        }
        // 200 Hz would alias to 56 Hz at 256 Hz.
        let fs = 1024.0;
        let x: Vec<f64> = (0..8192).map(|i| (2.0 * PI * 200.0 * i as f64 / fs).sin()).collect();
        let y = resample(&x, fs, 256.0).unwrap();
        assert!(amplitude(&y, 56.0, 256.0) < 1e-3);
    }

    #[test]
    fn identity_and_errors() {
        let x = vec![1.0, -2.0, 3.0];
        assert_eq!(resample(&x, 256.0, 256.0).unwrap(), x);
        assert!(resample(&x, 128.0, 256.0).is_err());
        assert_eq!(resample(&vec![0.0; 1001], 512.0, 256.0).unwrap().len(), 501);
    }
}
