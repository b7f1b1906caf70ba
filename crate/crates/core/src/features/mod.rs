//! Per-segment feature extraction.
//!
//! EEG: Welch band power in theta, alpha, beta and gamma for each of the 31
//! re-referenced electrodes, minus the same quantity on the baseline, giving
//! 124 values. Peripheral: 13 statistics of GSR, respiration,
//! plethysmograph heart rate and skin temperature, with no baseline removal.

pub mod peripheral;
pub mod psd;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use peripheral::{gsr_features, pleth_features, resp_features, temp_features};
pub use psd::{band_power, band_power_range, welch_psd, Psd, WELCH_OVERLAP, WELCH_WINDOW};

use crate::error::{Error, Result};
use crate::model::{
    Band, FeatureModality, FeatureVector, Modality, Segment, SegmentLabels, SegmentRef,
    EEG_ELECTRODES,
};
use crate::par::Execution;

/// Band powers of one signal in canonical band order.
pub fn band_powers(x: &[f64], fs: f64) -> Result<[f64; 4]> {
    let psd = welch_psd(x, fs, WELCH_WINDOW, WELCH_OVERLAP)?;
    let mut out = [0.0; 4];
    for (o, b) in out.iter_mut().zip(Band::ALL) {
        *o = band_power(&psd, b)?;
    }
    Ok(out)
}

pub fn eeg_features(segment: &Segment) -> Result<FeatureVector> {
    let eeg_count = segment
        .channels
        .iter()
        .filter(|c| c.modality == Modality::Eeg)
        .count();
    if eeg_count != EEG_ELECTRODES.len() {
        return Err(Error::invalid(format!(
            "segment {} has {eeg_count} EEG channels, expected {}",
            segment.reference(),
            EEG_ELECTRODES.len()
        )));
    }
    let mut values = Vec::with_capacity(4 * EEG_ELECTRODES.len());
    for name in EEG_ELECTRODES {
        let i = segment
            .channel_index(name)
            .filter(|&i| segment.channels[i].modality == Modality::Eeg)
            .ok_or_else(|| Error::MissingChannel(format!("{name} in {}", segment.reference())))?;
        let base = segment.baseline.get(i).filter(|b| !b.is_empty()).ok_or_else(|| {
            Error::invalid(format!("segment {} has no baseline for {name}", segment.reference()))
        })?;
        let stim = band_powers(&segment.samples[i], segment.sample_rate)?;
        let rest = band_powers(base, segment.sample_rate)?;
        values.extend(stim.iter().zip(&rest).map(|(s, b)| s - b));
    }
    FeatureVector::new(FeatureModality::Eeg, segment.reference(), values)
}

const PERIPHERAL_MODALITIES: [Modality; 4] =
    [Modality::Gsr, Modality::Resp, Modality::Pleth, Modality::Temp];

pub fn has_peripheral(segment: &Segment) -> bool {
    segment
        .channels
        .iter()
        .any(|c| PERIPHERAL_MODALITIES.contains(&c.modality))
}

pub fn peripheral_features(segment: &Segment) -> Result<FeatureVector> {
    let fs = segment.sample_rate;
    let channel = |m: Modality| -> Result<&[f64]> {
        segment
            .first_of(m)
            .map(|i| segment.samples[i].as_slice())
            .ok_or_else(|| Error::MissingChannel(format!("{} in {}", m.as_str(), segment.reference())))
    };
    let context = |m: Modality| move |e: Error| e.context(format!("{} of {}", m.as_str(), segment.reference()));
    let gsr = gsr_features(channel(Modality::Gsr)?, fs).map_err(context(Modality::Gsr))?;
    let resp = resp_features(channel(Modality::Resp)?, fs).map_err(context(Modality::Resp))?;
    let pleth = pleth_features(channel(Modality::Pleth)?, fs).map_err(context(Modality::Pleth))?;
    let temp = temp_features(channel(Modality::Temp)?, fs).map_err(context(Modality::Temp))?;
    let values: Vec<f64> = gsr.iter().chain(&resp).chain(&pleth).chain(&temp).copied().collect();
    FeatureVector::new(FeatureModality::Peripheral, segment.reference(), values)
}

/// Both feature vectors of one segment, with its labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentFeatures {
    pub segment: SegmentRef,
    pub labels: SegmentLabels,
    pub eeg: Option<FeatureVector>,
    pub peripheral: Option<FeatureVector>,
}

impl SegmentFeatures {
    pub fn get(&self, modality: FeatureModality) -> Option<&FeatureVector> {
        match modality {
            FeatureModality::Eeg => self.eeg.as_ref(),
            FeatureModality::Peripheral => self.peripheral.as_ref(),
        }
    }
}

/// EEG features for segments with EEG channels, peripheral features for
/// segments with any peripheral channel.
pub fn segment_features(segment: &Segment) -> Result<SegmentFeatures> {
    let has_eeg = segment.channels.iter().any(|c| c.modality == Modality::Eeg);
    Ok(SegmentFeatures {
        segment: segment.reference(),
        labels: segment.labels,
        eeg: if has_eeg { Some(eeg_features(segment)?) } else { None },
        peripheral: if has_peripheral(segment) {
            Some(peripheral_features(segment)?)
        } else {
            None
        },
    })
}

pub fn extract_features(segments: &[Segment], exec: Execution) -> Result<Vec<SegmentFeatures>> {
    exec.map_range(segments.len(), |i| segment_features(&segments[i]))
        .into_iter()
        .collect()
}

/// One row per segment: identifiers, the canonical feature names of
/// `modality`, then the labels. Segments lacking that modality are skipped.
pub fn write_features_csv<W: Write>(
    out: W,
    modality: FeatureModality,
    rows: &[SegmentFeatures],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let names = crate::model::feature_names(modality);
    let mut header = vec!["subject_id", "stimulus_id", "window"];
    header.extend(names.iter().map(String::as_str));
    header.extend(["dynamic_range", "content"]);
    w.write_record(&header)?;
    for row in rows {
        let Some(fv) = row.get(modality) else { continue };
        let mut rec = vec![
            row.segment.subject_id.clone(),
            row.segment.stimulus_id.clone(),
            row.segment.window_index.to_string(),
        ];
        rec.extend(fv.values().iter().map(|v| v.to_string()));
        rec.push(row.labels.dynamic_range.as_str().to_string());
        rec.push(row.labels.content.as_str().to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChannelSpec, Content, DynamicRange};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::PI;

    fn eeg_segment(seed: u64) -> Segment {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let channels: Vec<ChannelSpec> = EEG_ELECTRODES
            .iter()
            .rev()
            .map(|n| ChannelSpec::new(*n, Modality::Eeg, 256.0))
            .collect();
        let baseline: Vec<Vec<f64>> = channels
            .iter()
            .map(|_| (0..2048).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let samples: Vec<Vec<f64>> = baseline
            .iter()
            .map(|b| b.iter().cycle().take(2560).copied().collect())
            .collect();
        Segment {
            subject_id: "s01".into(),
            stimulus_id: "hall_hdr".into(),
            window_index: 0,
            duration_s: 10.0,
            sample_rate: 256.0,
            channels,
            samples,
            baseline,
            labels: SegmentLabels {
                dynamic_range: DynamicRange::Tmhdr,
                content: Content::Hall,
            },
        }
    }

    #[test]
    fn identical_baseline_gives_zero() {
        let mut seg = eeg_segment(1);
        for (s, b) in seg.samples.iter_mut().zip(&seg.baseline) {
            *s = b.clone();
        }
        let f = eeg_features(&seg).unwrap();
        assert_eq!(f.len(), 124);
        assert!(f.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn added_gamma_tone_only_moves_o1_gamma() {
        let mut seg = eeg_segment(2);
        for (s, b) in seg.samples.iter_mut().zip(&seg.baseline) {
            *s = b.iter().cycle().take(2560).copied().collect();
        }
        let reference = eeg_features(&seg).unwrap();
        let o1 = seg.channel_index("O1").unwrap();
        for (i, v) in seg.samples[o1].iter_mut().enumerate() {
            *v += (2.0 * PI * 35.0 * i as f64 / 256.0).sin();
        }
        let f = eeg_features(&seg).unwrap();
        for (name, v) in f.entries() {
            let delta = v - reference.get(name).unwrap();
            if name == "O1_gamma" {
                assert!((delta - 0.5).abs() < 0.05, "{delta}");
            } else {
                assert!(delta.abs() < 1e-9, "{name}: {delta}");
            }
        }
    }

    #[test]
    fn channel_order_on_input_does_not_matter() {
        let seg = eeg_segment(3);
        let mut shuffled = seg.clone();
        shuffled.channels.reverse();
        shuffled.samples.reverse();
        shuffled.baseline.reverse();
        assert_eq!(eeg_features(&seg).unwrap(), eeg_features(&shuffled).unwrap());
    }

    #[test]
    fn wrong_channel_count_and_missing_baseline() {
        let mut seg = eeg_segment(4);
        seg.channels.pop();
        seg.samples.pop();
        seg.baseline.pop();
        assert!(eeg_features(&seg).is_err());
        let mut seg = eeg_segment(4);
        seg.baseline[0].clear();
        assert!(eeg_features(&seg).is_err());
    }

    #[test]
    fn scaled_stimulus_with_zero_baseline() {
        let mut seg = eeg_segment(5);
        for b in &mut seg.baseline {
            b.iter_mut().for_each(|v| *v = 0.0);
        }
        let f1 = eeg_features(&seg).unwrap();
        for s in &mut seg.samples {
            s.iter_mut().for_each(|v| *v *= 7.0);
        }
        let f7 = eeg_features(&seg).unwrap();
        for (a, b) in f1.values().iter().zip(f7.values()) {
            assert!((b / a / 49.0 - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn circular_shift_changes_band_power_little() {
        // Stationary multi-tone signal whose tones complete whole cycles in 10 s.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // Tones at least 2.2 Hz apart so no two share a Hann main lobe.
        let tones: Vec<(f64, f64, f64)> = (0..20)
            .map(|k| {
                let f = 3.0 + 2.2 * k as f64 + 0.1 * rng.random_range(0..2) as f64;
                (f, rng.random_range(0.2..1.0), rng.random_range(0.0..2.0 * PI))
            })
            .collect();
        let x: Vec<f64> = (0..2560)
            .map(|i| {
                let t = i as f64 / 256.0;
                tones.iter().map(|(f, a, p)| a * (2.0 * PI * f * t + p).sin()).sum()
            })
            .collect();
        let a = band_powers(&x, 256.0).unwrap();
        for shift in [1, 100, 333, 1279] {
            let mut shifted = x.clone();
            shifted.rotate_left(shift);
            let b = band_powers(&shifted, 256.0).unwrap();
            for (p, q) in a.iter().zip(&b) {
                assert!((p / q - 1.0).abs() < 0.02, "shift {shift}: {p} {q}");
            }
        }
    }
}
