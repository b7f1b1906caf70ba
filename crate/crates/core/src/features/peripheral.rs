//! Peripheral features: galvanic skin response, respiration,
//! plethysmograph heart rate and skin temperature.

use crate::error::{Error, Result};
use crate::preprocess::filter::{self, FilterSpec};
use crate::stats::{mean, sample_std};

/// First difference scaled to units per second.
pub fn derivative(x: &[f64], fs: f64) -> Vec<f64> {
    x.windows(2).map(|w| (w[1] - w[0]) * fs).collect()
}

/// GSR mean, std, derivative mean, derivative std.
pub fn gsr_features(x: &[f64], fs: f64) -> Result<[f64; 4]> {
    non_empty(x, "GSR")?;
    let d = derivative(x, fs);
    Ok([mean(x), sample_std(x), mean(&d), sample_std(&d)])
}

/// Respiration derivative mean, std, and mean time between inhalation peaks.
pub fn resp_features(x: &[f64], fs: f64) -> Result<[f64; 3]> {
    non_empty(x, "RESP")?;
    let peaks = breath_peaks(x, fs);
    if peaks.len() < 2 {
        return Err(Error::Degenerate(format!(
            "respiration segment has {} inhalation peak(s), at least 2 are needed",
            peaks.len()
        )));
    }
    let intervals: Vec<f64> = peaks.windows(2).map(|w| w[1] - w[0]).collect();
    Ok([mean(&derivative(x, fs)), sample_std(x), mean(&intervals)])
}

/// Heart rate mean and std, and mean and std of successive heart-rate
/// differences, from detected pulses.
pub fn pleth_features(x: &[f64], fs: f64) -> Result<[f64; 4]> {
    non_empty(x, "PLETH")?;
    let beats = detect_pulses(x, fs)?;
    if beats.len() < 2 {
        return Err(Error::Degenerate(format!(
            "plethysmograph segment has {} detected pulse(s), at least 2 are needed",
            beats.len()
        )));
    }
    Ok(heart_rate_features(&beats))
}

/// Features of the heart-rate series implied by beat times in seconds.
pub fn heart_rate_features(beats: &[f64]) -> [f64; 4] {
    let hr: Vec<f64> = beats.windows(2).map(|w| 60.0 / (w[1] - w[0])).collect();
    let hrv: Vec<f64> = hr.windows(2).map(|w| w[1] - w[0]).collect();
    [mean(&hr), sample_std(&hr), mean(&hrv), sample_std(&hrv)]
}

/// Temperature mean and derivative mean.
pub fn temp_features(x: &[f64], fs: f64) -> Result<[f64; 2]> {
    non_empty(x, "TEMP")?;
    Ok([mean(x), mean(&derivative(x, fs))])
}

fn non_empty(x: &[f64], what: &str) -> Result<()> {
    if x.len() < 2 {
        return Err(Error::TooShort(format!("{what} segment has {} sample(s)", x.len())));
    }
    Ok(())
}

/// Offset of the vertex of the parabola through three equally spaced points.
fn vertex_offset(l: f64, c: f64, r: f64) -> f64 {
    let den = l - 2.0 * c + r;
    if den.abs() < f64::EPSILON * (l.abs() + c.abs() + r.abs()).max(1e-300) {
        return 0.0;
    }
    (0.5 * (l - r) / den).clamp(-0.5, 0.5)
}

/// Local maxima above the median, at least one second apart (taller peaks
/// win), as times in seconds refined by parabolic interpolation.
pub fn breath_peaks(x: &[f64], fs: f64) -> Vec<f64> {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let candidates: Vec<usize> = (1..x.len().saturating_sub(1))
        .filter(|&i| x[i] > median && x[i] > x[i - 1] && x[i] >= x[i + 1])
        .collect();
    let picked = enforce_spacing(&candidates, x, (fs * 1.0).round() as usize);
    picked
        .into_iter()
        .map(|i| (i as f64 + vertex_offset(x[i - 1], x[i], x[i + 1])) / fs)
        .collect()
}

/// Keep the tallest candidates such that no two are closer than `distance`
/// samples; result in time order.
fn enforce_spacing(candidates: &[usize], height: &[f64], distance: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|a, b| height[candidates[*b]].total_cmp(&height[candidates[*a]]).then(a.cmp(b)));
    let mut keep: Vec<usize> = Vec::new();
    for o in order {
        let c = candidates[o];
        if keep.iter().all(|k| k.abs_diff(c) >= distance) {
            keep.push(c);
        }
    }
    keep.sort_unstable();
    keep
}

const PULSE_BAND: (f64, f64) = (0.5, 8.0);
const INTEGRATION_S: f64 = 0.15;
const REFRACTORY_S: f64 = 0.25;
const ECHO_S: f64 = 0.36;
/// Pulses whose upstroke lies this close to either end are not reported.
pub const PULSE_EDGE_S: f64 = 0.15;

/// Pulse onsets (seconds) found in the style of Pan and Tompkins: band-limit,
/// differentiate, keep rising slopes, square, integrate over a moving
/// window, then classify integrator peaks as signal or noise with running
/// thresholds, with a search-back for missed beats. The fiducial point of
/// each beat is the steepest upstroke, refined by parabolic interpolation.
pub fn detect_pulses(x: &[f64], fs: f64) -> Result<Vec<f64>> {
    let spec = FilterSpec {
        order: 2,
        ..FilterSpec::bandpass(PULSE_BAND.0, PULSE_BAND.1.min(0.45 * fs))
    };
    let y = filter::apply(x, fs, &spec)?;
    let n = y.len();
    let mut slope = vec![0.0; n];
    for i in 2..n.saturating_sub(2) {
        let d = (2.0 * y[i + 2] + y[i + 1] - y[i - 1] - 2.0 * y[i - 2]) * fs / 8.0;
        slope[i] = d.max(0.0);
    }
    let squared: Vec<f64> = slope.iter().map(|d| d * d).collect();
    let width = ((INTEGRATION_S * fs).round() as usize).max(1);
    let mut integ = vec![0.0; n];
    let mut run = 0.0;
    for i in 0..n {
        run += squared[i];
        if i >= width {
            run -= squared[i - width];
        }
        integ[i] = run / width as f64;
    }

    let refractory = (REFRACTORY_S * fs).round() as usize;
    let echo_window = (ECHO_S * fs).round() as usize;
    let candidates: Vec<usize> = (1..n.saturating_sub(1))
        .filter(|&i| integ[i] > integ[i - 1] && integ[i] >= integ[i + 1])
        .collect();
    let candidates = enforce_spacing(&candidates, &integ, refractory);
    if candidates.is_empty() {
        return Ok(Vec::new());
    }

    let learn = ((2.0 * fs) as usize).min(n);
    let peak_max = integ[..learn].iter().cloned().fold(0.0, f64::max);
    let mut spki = peak_max / 3.0;
    let mut npki = mean(&integ[..learn]) / 2.0;
    let mut beats: Vec<usize> = Vec::new();
    let mut skipped: Vec<usize> = Vec::new();
    let mut rr_avg: Option<f64> = None;
    for &c in &candidates {
        let threshold = npki + 0.25 * (spki - npki);
        let p = integ[c];
        // A weaker peak soon after a beat is the same pulse's reflected wave.
        let echo = beats
            .last()
            .is_some_and(|&last| c - last < echo_window && p < 0.5 * integ[last].max(spki));
        if p > threshold && !echo {
            if let (Some(&last), Some(avg)) = (beats.last(), rr_avg) {
                // search back: a long gap hides a beat that was below threshold
                if (c - last) as f64 > 1.66 * avg {
                    let half = threshold / 2.0;
                    if let Some(&m) = skipped
                        .iter()
                        .filter(|&&s| {
                            s >= last + echo_window && s + refractory <= c && integ[s] > half
                        })
                        .max_by(|a, b| integ[**a].total_cmp(&integ[**b]))
                    {
                        beats.push(m);
                        spki = 0.25 * integ[m] + 0.75 * spki;
                    }
                }
            }
            if let Some(&last) = beats.last() {
                let rr = (c - last) as f64;
                rr_avg = Some(rr_avg.map_or(rr, |a| 0.875 * a + 0.125 * rr));
            }
            beats.push(c);
            spki = 0.125 * p + 0.875 * spki;
        } else {
            skipped.push(c);
            npki = 0.125 * p + 0.875 * npki;
        }
    }

    // Steepest upstroke inside the integration window preceding each peak.
    let mut times = Vec::with_capacity(beats.len());
    // Reflected waves accepted before any beat was seen are far weaker than
    // true pulses.
    if beats.len() >= 3 {
        let mut levels: Vec<f64> = beats.iter().map(|&b| integ[b]).collect();
        levels.sort_by(f64::total_cmp);
        let median = levels[levels.len() / 2];
        beats.retain(|&b| integ[b] >= 0.25 * median);
    }

    // Beats whose upstroke is cut by, or lies close to, either end of the
    // signal are dropped: filter edge effects distort their timing.
    let margin = ((PULSE_EDGE_S * fs).round() as usize).max(2);
    let first = margin;
    let last = n.saturating_sub(margin + 1);
    for b in beats {
        let lo = b.saturating_sub(width + 2).max(first);
        let hi = (b + 1).min(last + 1);
        if lo >= hi {
            continue;
        }
        let k = (lo..hi)
            .max_by(|a, b| slope[*a].total_cmp(&slope[*b]))
            .expect("non-empty window");
        if k <= first || k >= last || slope[k] <= 0.0 {
            continue;
        }
        times.push((k as f64 + vertex_offset(slope[k - 1], slope[k], slope[k + 1])) / fs);
    }
    Ok(times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const FS: f64 = 256.0;

    /// Plethysmograph-like wave: a sharp systolic rise and slower decay per beat.
    fn pulse_train(beats: &[f64], secs: f64) -> Vec<f64> {
        (0..(secs * FS) as usize)
            .map(|i| {
                let t = i as f64 / FS;
                beats
                    .iter()
                    .map(|b| {
                        let u = t - b;
                        if u < -0.5 {
                            0.0
                        } else {
                            (-(u - 0.12).powi(2) / (2.0 * 0.05f64.powi(2))).exp()
                                + 0.4 * (-(u - 0.4).powi(2) / (2.0 * 0.08f64.powi(2))).exp()
                        }
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn constant_gsr() {
        assert_eq!(gsr_features(&vec![5.0; 2560], FS).unwrap(), [5.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn temperature_ramp() {
        let x: Vec<f64> = (0..2560).map(|i| 33.0 + 0.01 * i as f64 / FS).collect();
        let [m, d] = temp_features(&x, FS).unwrap();
        assert!((d - 0.01).abs() < 1e-6);
        assert!((m - (33.0 + 0.01 * 2559.0 / FS / 2.0)).abs() < 1e-9);
    }

    #[test]
    fn steady_72_bpm() {
        let beats: Vec<f64> = (0..14).map(|k| -0.3 + k as f64 * 60.0 / 72.0).collect();
        let x = pulse_train(&beats, 10.0);
        let f = pleth_features(&x, FS).unwrap();
        assert!((f[0] - 72.0).abs() < 1.0, "{f:?}");
        assert!(f[2].abs() < 0.5, "{f:?}");
        assert!(f[3] < 0.5, "{f:?}");
    }

    #[test]
    fn variable_rhythm_is_tracked() {
        let mut beats = vec![0.2];
        for k in 0..12 {
            let ibi = if k % 2 == 0 { 0.75 } else { 0.9 };
            beats.push(beats.last().unwrap() + ibi);
        }
        let x = pulse_train(&beats, 10.0);
        let found = detect_pulses(&x, FS).unwrap();
        let truth: Vec<f64> = beats.iter().copied().filter(|b| *b < 9.5).collect();
        assert!(found.len() >= truth.len() - 1);
        let hr_true = heart_rate_features(&truth);
        let hr = pleth_features(&x, FS).unwrap();
        assert!((hr[0] / hr_true[0] - 1.0).abs() < 0.02, "{hr:?} vs {hr_true:?}");
    }

    #[test]
    fn flat_pleth_is_an_error() {
        assert!(pleth_features(&vec![1.0; 2560], FS).is_err());
    }

    #[test]
    fn breathing_at_quarter_hertz() {
        let x: Vec<f64> = (0..2560)
            .map(|i| (2.0 * PI * 0.25 * i as f64 / FS + 0.3).sin())
            .collect();
        let [_, std, peak_t] = resp_features(&x, FS).unwrap();
        assert!((peak_t - 4.0).abs() < 1e-3);
        assert!((std - crate::stats::sample_std(&x)).abs() < 1e-12);
        assert!(resp_features(&vec![0.0; 2560], FS).is_err());
    }
}
