//! Butterworth IIR filters as second-order sections, with forward-backward
//! (zero-phase) application.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FilterKind {
    Bandpass,
    Lowpass,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub low_hz: f64,
    pub high_hz: f64,
    /// Butterworth order of each edge.
    pub order: usize,
    pub zero_phase: bool,
}

impl FilterSpec {
    pub fn bandpass(low_hz: f64, high_hz: f64) -> Self {
        FilterSpec {
            kind: FilterKind::Bandpass,
            low_hz,
            high_hz,
            order: 4,
            zero_phase: true,
        }
    }

    pub fn lowpass(high_hz: f64) -> Self {
        FilterSpec {
            kind: FilterKind::Lowpass,
            low_hz: 0.0,
            high_hz,
            order: 4,
            zero_phase: true,
        }
    }

    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        let nyquist = sample_rate / 2.0;
        if self.order == 0 {
            return Err(Error::invalid("filter order must be positive"));
        }
        if !(self.low_hz >= 0.0 && self.low_hz < self.high_hz && self.high_hz < nyquist) {
            return Err(Error::invalid(format!(
                "filter band [{}, {}] Hz invalid for Nyquist {nyquist} Hz",
                self.low_hz, self.high_hz
            )));
        }
        if self.kind == FilterKind::Bandpass && self.low_hz <= 0.0 {
            return Err(Error::invalid("bandpass needs a positive low edge; use a lowpass"));
        }
        Ok(())
    }
}

/// Transposed direct-form II biquad, `a0` normalized to 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }

    /// Magnitude response at `freq` for sample rate `fs`.
    pub fn magnitude(&self, freq: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * freq / fs;
        let eval = |c: &[f64; 3]| {
            let re = c[0] + c[1] * (-w).cos() + c[2] * (-2.0 * w).cos();
            let im = c[1] * (-w).sin() + c[2] * (-2.0 * w).sin();
            (re * re + im * im).sqrt()
        };
        eval(&self.b) / eval(&self.a)
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Edge {
    Low,
    High,
}

/// Digital Butterworth sections via the bilinear transform with prewarping.
fn butterworth(order: usize, cutoff: f64, fs: f64, edge: Edge) -> Vec<Biquad> {
    let warped = 2.0 * fs * (PI * cutoff / fs).tan();
    let k = 2.0 * fs;
    let mut sections = Vec::new();
    // Highpass poles map to the same analog set because the prototype poles
    // lie on the unit circle.
    for i in 0..order / 2 {
        let theta = PI * (2 * i + order + 1) as f64 / (2 * order) as f64;
        let (pr, pi) = (warped * theta.cos(), warped * theta.sin());
        // z = (k + p) / (k - p)
        let (nr, ni) = (k + pr, pi);
        let (dr, di) = (k - pr, -pi);
        let den = dr * dr + di * di;
        let zr = (nr * dr + ni * di) / den;
        let zi = (ni * dr - nr * di) / den;
        let a = [1.0, -2.0 * zr, zr * zr + zi * zi];
        let (b, at) = match edge {
            Edge::High => ([1.0, -2.0, 1.0], -1.0),
            Edge::Low => ([1.0, 2.0, 1.0], 1.0),
        };
        let num = b[0] + b[1] * at + b[2];
        let dnm = a[0] + a[1] * at + a[2];
        let g = dnm / num;
        sections.push(Biquad {
            b: [b[0] * g, b[1] * g, b[2] * g],
            a,
        });
    }
    if order % 2 == 1 {
        let pr = -warped;
        let z = (k + pr) / (k - pr);
        let a = [1.0, -z, 0.0];
        let (b, at) = match edge {
            Edge::High => ([1.0, -1.0, 0.0], -1.0),
            Edge::Low => ([1.0, 1.0, 0.0], 1.0),
        };
        let g = (a[0] + a[1] * at) / (b[0] + b[1] * at);
        sections.push(Biquad {
            b: [b[0] * g, b[1] * g, 0.0],
            a,
        });
    }
    sections
}

pub fn design(spec: &FilterSpec, fs: f64) -> Result<Vec<Biquad>> {
    spec.validate(fs)?;
    let mut sections = Vec::new();
    if spec.kind == FilterKind::Bandpass {
        sections.extend(butterworth(spec.order, spec.low_hz, fs, Edge::High));
    }
    sections.extend(butterworth(spec.order, spec.high_hz, fs, Edge::Low));
    Ok(sections)
}

/// Combined magnitude response of a cascade.
pub fn cascade_magnitude(sections: &[Biquad], freq: f64, fs: f64) -> f64 {
    sections.iter().map(|s| s.magnitude(freq, fs)).product()
}

/// Steady-state section states for a constant unit input.
fn step_states(sections: &[Biquad]) -> Vec<[f64; 2]> {
    let mut level = 1.0;
    sections
        .iter()
        .map(|s| {
            let y = s.dc_gain() * level;
            let z2 = s.b[2] * level - s.a[2] * y;
            let z1 = s.b[1] * level - s.a[1] * y + z2;
            level = y;
            [z1, z2]
        })
        .collect()
}

fn run_sections(sections: &[Biquad], x: &mut [f64], init: Option<&[[f64; 2]]>) {
    let x0 = x.first().copied().unwrap_or(0.0);
    for (i, s) in sections.iter().enumerate() {
        let [mut z1, mut z2] = match init {
            Some(zi) => [zi[i][0] * x0, zi[i][1] * x0],
            None => [0.0, 0.0],
        };
        for v in x.iter_mut() {
            let input = *v;
            let y = s.b[0] * input + z1;
            z1 = s.b[1] * input - s.a[1] * y + z2;
            z2 = s.b[2] * input - s.a[2] * y;
            *v = y;
        }
    }
}

/// Causal filtering, states initialized to the first sample's steady state.
pub fn sosfilt(sections: &[Biquad], x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    let zi = step_states(sections);
    run_sections(sections, &mut y, Some(&zi));
    y
}

/// Zero-phase filtering with odd-reflection padding.
pub fn sosfiltfilt(sections: &[Biquad], x: &[f64], padlen: usize) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return x.to_vec();
    }
    let pad = padlen.min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    let zi = step_states(sections);
    run_sections(sections, &mut ext, Some(&zi));
    ext.reverse();
    run_sections(sections, &mut ext, Some(&zi));
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// Apply `spec` to a signal sampled at `fs`.
pub fn apply(x: &[f64], fs: f64, spec: &FilterSpec) -> Result<Vec<f64>> {
    let sections = design(spec, fs)?;
    if !spec.zero_phase {
        return Ok(sosfilt(&sections, x));
    }
    let slowest = if spec.kind == FilterKind::Bandpass {
        spec.low_hz
    } else {
        spec.high_hz
    };
    let padlen = ((3.0 * fs / slowest).ceil() as usize).max(3 * (2 * sections.len() + 1));
    Ok(sosfiltfilt(&sections, x, padlen))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / fs).sin()).collect()
    }

    /// Amplitude of `freq` by direct correlation over the middle of the signal.
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
    fn design_matches_butterworth_response() {
        let fs = 256.0;
        let lp = design(&FilterSpec::lowpass(10.0), fs).unwrap();
        assert_eq!(lp.len(), 2);
        assert!((cascade_magnitude(&lp, 0.0, fs) - 1.0).abs() < 1e-12);
        assert!((cascade_magnitude(&lp, 10.0, fs) - 0.5f64.sqrt()).abs() < 1e-9);
        let bp = design(&FilterSpec::bandpass(2.0, 100.0), fs).unwrap();
        assert!((cascade_magnitude(&bp, 2.0, fs) - 0.5f64.sqrt()).abs() < 1e-3);
        assert!(cascade_magnitude(&bp, 1.0, fs) < 0.1);
    }

    #[test]
    fn odd_order_sections() {
        let spec = FilterSpec {
            order: 3,
            ..FilterSpec::lowpass(20.0)
        };
        let s = design(&spec, 256.0).unwrap();
        assert_eq!(s.len(), 2);
        assert!((cascade_magnitude(&s, 20.0, 256.0) - 0.5f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn passband_sine_survives_eeg_band() {
        let fs = 256.0;
        let x = sine(50.0, fs, 2560);
        let y = apply(&x, fs, &FilterSpec::bandpass(2.0, 100.0)).unwrap();
        let a = amplitude(&y, 50.0, fs);
        assert!((a - 1.0).abs() < 0.05, "amplitude {a}");
    }

    #[test]
    fn slow_drift_is_attenuated_20db() {
        let fs = 256.0;
        let x = sine(0.5, fs, 256 * 40);
        let y = apply(&x, fs, &FilterSpec::bandpass(2.0, 100.0)).unwrap();
        let a = amplitude(&y, 0.5, fs);
        assert!(a < 0.1, "amplitude {a}");
    }

    #[test]
    fn zero_in_zero_out() {
        let y = apply(&vec![0.0; 1000], 256.0, &FilterSpec::bandpass(2.0, 100.0)).unwrap();
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_phase_keeps_pulse_centered() {
        let fs = 256.0;
        let mut x = vec![0.0; 1024];
        x[512] = 1.0;
        let y = apply(&x, fs, &FilterSpec::lowpass(20.0)).unwrap();
        let peak = y
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, 512);
        for k in 1..50 {
            assert!((y[512 - k] - y[512 + k]).abs() < 1e-9);
        }
        let causal = sosfilt(&design(&FilterSpec::lowpass(20.0), fs).unwrap(), &x);
        let cpeak = causal
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!(cpeak > 512);
    }

    #[test]
    fn constant_passes_lowpass_without_transient() {
        let y = apply(&vec![3.5; 500], 256.0, &FilterSpec::lowpass(10.0)).unwrap();
        assert!(y.iter().all(|v| (v - 3.5).abs() < 1e-9));
    }

    #[test]
    fn filtering_twice_keeps_in_band_energy() {
        let fs = 256.0;
        let spec = FilterSpec::bandpass(2.0, 100.0);
        for f in [10.0, 30.0, 45.0] {
            let once = apply(&sine(f, fs, 2560), fs, &spec).unwrap();
            let twice = apply(&once, fs, &spec).unwrap();
            let e1: f64 = once[640..1920].iter().map(|v| v * v).sum();
            let e2: f64 = twice[640..1920].iter().map(|v| v * v).sum();
            assert!((e2 / e1 - 1.0).abs() < 0.01, "{f} Hz: {}", e2 / e1);
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(FilterSpec::bandpass(2.0, 130.0).validate(256.0).is_err());
        assert!(FilterSpec::bandpass(0.0, 10.0).validate(256.0).is_err());
        assert!(FilterSpec::bandpass(20.0, 10.0).validate(256.0).is_err());
        assert!(FilterSpec::lowpass(10.0).validate(256.0).is_ok());
    }
}
