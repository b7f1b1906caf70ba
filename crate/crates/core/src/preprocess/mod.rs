//! Raw recording -> clean 256 Hz segments.
//!
//! Order of operations for one recording:
//! 1. resample every channel to the target rate;
//! 2. band-pass EEG and EOG, low-pass respiration (zero-phase Butterworth);
//! 3. re-reference EEG to Cz (Cz itself is dropped);
//! 4. remove EOG-correlated independent components from the EEG;
//! 5. cut each baseline and stimulus period, trimming both ends;
//! 6. split stimuli into fixed-length windows paired with their baseline.

pub mod filter;
pub mod ica;
pub mod resample;

use serde::{Deserialize, Serialize};

pub use filter::{FilterKind, FilterSpec};
pub use ica::{ica_artifact_reject, IcaConfig, IcaDecomposition};
pub use resample::resample;

use crate::error::{Error, Result};
use crate::model::{
    ChannelSpec, Modality, Recording, Segment, SegmentLabels, StimulusMarker, REFERENCE_CHANNEL,
    TARGET_RATE,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub target_hz: f64,
    /// EEG (and EOG) band edges in Hz.
    pub eeg_band: [f64; 2],
    pub filter_order: usize,
    pub resp_lowpass_hz: f64,
    pub ica: IcaConfig,
    pub trim_s: f64,
    pub segment_s: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_hz: TARGET_RATE,
            eeg_band: [2.0, 100.0],
            filter_order: 4,
            resp_lowpass_hz: 10.0,
            ica: IcaConfig::default(),
            trim_s: 1.0,
            segment_s: 10.0,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_hz > 0.0) {
            return Err(Error::invalid("resample.target_hz must be positive"));
        }
        self.eeg_filter().validate(self.target_hz)?;
        self.resp_filter().validate(self.target_hz)?;
        if !(0.0..=1.0).contains(&self.ica.threshold) {
            return Err(Error::invalid("ica.threshold must lie in [0, 1]"));
        }
        if self.ica.max_iter == 0 {
            return Err(Error::invalid("ica.max_iter must be positive"));
        }
        if !(self.trim_s >= 0.0) || !(self.segment_s > 0.0) {
            return Err(Error::invalid("trim_s must be >= 0 and segment_s > 0"));
        }
        Ok(())
    }

    pub fn eeg_filter(&self) -> FilterSpec {
        FilterSpec {
            order: self.filter_order,
            ..FilterSpec::bandpass(self.eeg_band[0], self.eeg_band[1])
        }
    }

    pub fn resp_filter(&self) -> FilterSpec {
        FilterSpec {
            order: self.filter_order,
            ..FilterSpec::lowpass(self.resp_lowpass_hz)
        }
    }
}

/// Drop `trim_s` seconds from both ends of a period.
pub fn trim_edges(samples: &[f64], sample_rate: f64, trim_s: f64) -> Result<Vec<f64>> {
    let cut = (trim_s * sample_rate).round() as usize;
    if samples.len() <= 2 * cut {
        return Err(Error::TooShort(format!(
            "period of {:.3} s cannot lose {trim_s} s at each end",
            samples.len() as f64 / sample_rate
        )));
    }
    Ok(samples[cut..samples.len() - cut].to_vec())
}

/// Subtract Cz from every EEG channel and drop Cz. Returns the remaining
/// channel specs in input order.
pub fn rereference_to_cz(
    channels: &[ChannelSpec],
    data: &[Vec<f64>],
) -> Result<(Vec<ChannelSpec>, Vec<Vec<f64>>)> {
    let cz = channels
        .iter()
        .position(|c| c.name == REFERENCE_CHANNEL)
        .ok_or_else(|| Error::MissingChannel(REFERENCE_CHANNEL.into()))?;
    let reference = &data[cz];
    let mut specs = Vec::with_capacity(channels.len() - 1);
    let mut out = Vec::with_capacity(channels.len() - 1);
    for (i, (spec, x)) in channels.iter().zip(data).enumerate() {
        if i == cz {
            continue;
        }
        if x.len() != reference.len() {
            return Err(Error::invalid(format!(
                "channel `{}` length differs from Cz",
                spec.name
            )));
        }
        specs.push(spec.clone());
        out.push(x.iter().zip(reference).map(|(a, r)| a - r).collect());
    }
    Ok((specs, out))
}

/// A recording after resampling, filtering, re-referencing and ICA cleaning.
#[derive(Clone, Debug)]
pub struct ProcessedRecording {
    pub subject_id: String,
    pub sample_rate: f64,
    pub channels: Vec<ChannelSpec>,
    pub samples: Vec<Vec<f64>>,
    pub markers: Vec<StimulusMarker>,
    pub ica: Option<IcaDecomposition>,
}

pub fn preprocess_recording(rec: &Recording, cfg: &PreprocessConfig) -> Result<ProcessedRecording> {
    cfg.validate()?;
    let fs = cfg.target_hz;
    let mut channels = Vec::with_capacity(rec.channels.len());
    let mut samples = Vec::with_capacity(rec.channels.len());
    for (spec, raw) in rec.channels.iter().zip(&rec.samples) {
        let x: Vec<f64> = raw.iter().map(|v| f64::from(*v)).collect();
        let x = resample(&x, spec.sample_rate, fs)
            .map_err(|e| e.context(format!("{}: channel {}", rec.subject_id, spec.name)))?;
        let x = match spec.modality {
            Modality::Eeg | Modality::Eog => filter::apply(&x, fs, &cfg.eeg_filter())?,
            Modality::Resp => filter::apply(&x, fs, &cfg.resp_filter())?,
            _ => x,
        };
        channels.push(ChannelSpec::new(spec.name.clone(), spec.modality, fs));
        samples.push(x);
    }

    // Equalize lengths: rates may round differently per channel.
    let len = samples.iter().map(Vec::len).min().unwrap_or(0);
    for s in &mut samples {
        s.truncate(len);
    }

    let eeg_idx: Vec<usize> = (0..channels.len())
        .filter(|&i| channels[i].modality == Modality::Eeg)
        .collect();
    let eog_idx: Vec<usize> = (0..channels.len())
        .filter(|&i| channels[i].modality == Modality::Eog)
        .collect();

    let mut out_channels = Vec::new();
    let mut out_samples = Vec::new();
    let mut decomposition = None;
    if !eeg_idx.is_empty() {
        let specs: Vec<ChannelSpec> = eeg_idx.iter().map(|&i| channels[i].clone()).collect();
        let data: Vec<Vec<f64>> = eeg_idx.iter().map(|&i| samples[i].clone()).collect();
        let (specs, mut data) = rereference_to_cz(&specs, &data)
            .map_err(|e| e.context(format!("subject {}", rec.subject_id)))?;
        if cfg.ica.enabled && !eog_idx.is_empty() {
            let eog: Vec<Vec<f64>> = eog_idx.iter().map(|&i| samples[i].clone()).collect();
            let (clean, dec) = ica_artifact_reject(&data, &eog, &cfg.ica)
                .map_err(|e| e.context(format!("ICA for subject {}", rec.subject_id)))?;
            log::debug!(
                "{}: ICA converged in {} iterations, rejected {:?}",
                rec.subject_id,
                dec.iterations,
                dec.rejected
            );
            data = clean;
            decomposition = Some(dec);
        }
        out_channels.extend(specs);
        out_samples.extend(data);
    }
    for (i, (spec, x)) in channels.into_iter().zip(samples).enumerate() {
        if !eeg_idx.contains(&i) {
            out_channels.push(spec);
            out_samples.push(x);
        }
    }

    Ok(ProcessedRecording {
        subject_id: rec.subject_id.clone(),
        sample_rate: fs,
        channels: out_channels,
        samples: out_samples,
        markers: rec.markers.clone(),
        ica: decomposition,
    })
}

fn period<'a>(data: &'a [f64], m: &StimulusMarker, fs: f64) -> Result<&'a [f64]> {
    let start = (m.start_s * fs).round() as usize;
    let end = (m.end_s * fs).round() as usize;
    data.get(start..end).ok_or_else(|| {
        Error::TooShort(format!(
            "signal of {:.3} s ends before marker `{}` ({}-{} s)",
            data.len() as f64 / fs,
            m.stimulus_id,
            m.start_s,
            m.end_s
        ))
    })
}

/// Split every stimulus into consecutive non-overlapping windows of
/// `cfg.segment_s` seconds after trimming; the tail is discarded. Each window
/// carries the trimmed baseline bound to its stimulus. EOG channels are not
/// carried into segments.
pub fn segment(rec: &ProcessedRecording, cfg: &PreprocessConfig) -> Result<Vec<Segment>> {
    let fs = rec.sample_rate;
    let win = (cfg.segment_s * fs).round() as usize;
    let keep: Vec<usize> = (0..rec.channels.len())
        .filter(|&i| rec.channels[i].modality != Modality::Eog)
        .collect();
    let channels: Vec<ChannelSpec> = keep.iter().map(|&i| rec.channels[i].clone()).collect();

    let mut stimuli: Vec<&StimulusMarker> = rec
        .markers
        .iter()
        .filter(|m| m.kind == crate::model::MarkerKind::Stimulus)
        .collect();
    stimuli.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));

    let mut out = Vec::new();
    for stim in stimuli {
        let base = rec
            .markers
            .iter()
            .find(|m| m.kind == crate::model::MarkerKind::Baseline && m.stimulus_id == stim.stimulus_id)
            .ok_or_else(|| Error::invalid(format!("stimulus `{}` has no baseline", stim.stimulus_id)))?;

        let mut stim_data = Vec::with_capacity(keep.len());
        let mut base_data = Vec::with_capacity(keep.len());
        for &i in &keep {
            let s = trim_edges(period(&rec.samples[i], stim, fs)?, fs, cfg.trim_s)
                .map_err(|e| e.context(format!("stimulus `{}`", stim.stimulus_id)))?;
            let b = trim_edges(period(&rec.samples[i], base, fs)?, fs, cfg.trim_s)
                .map_err(|e| e.context(format!("baseline `{}`", stim.stimulus_id)))?;
            stim_data.push(s);
            base_data.push(b);
        }
        let available = stim_data.first().map_or(0, Vec::len);
        let count = available / win;
        if count == 0 {
            return Err(Error::TooShort(format!(
                "stimulus `{}` of subject {} has {:.3} s after trimming, less than one {} s segment",
                stim.stimulus_id,
                rec.subject_id,
                available as f64 / fs,
                cfg.segment_s
            )));
        }
        for w in 0..count {
            out.push(Segment {
                subject_id: rec.subject_id.clone(),
                stimulus_id: stim.stimulus_id.clone(),
                window_index: w,
                duration_s: cfg.segment_s,
                sample_rate: fs,
                channels: channels.clone(),
                samples: stim_data.iter().map(|s| s[w * win..(w + 1) * win].to_vec()).collect(),
                baseline: base_data.clone(),
                labels: SegmentLabels {
                    dynamic_range: stim.dynamic_range,
                    content: stim.content,
                },
            });
        }
    }
    Ok(out)
}
