//! Synthetic PhysioSet generator with analytic ground truth.
//!
//! EEG is Gaussian noise shaped in the frequency domain to a per-1-Hz-bin
//! density: a white floor plus one level per band. During TMHDR stimuli the
//! density of the effect bands on the effect electrodes is multiplied by the
//! class power ratio. A stereotyped blink train is added to the frontal
//! electrodes and to the EOG channels. Peripheral channels follow simple
//! parametric models whose per-segment feature values can be computed in
//! closed form, which is what the ground-truth manifest records.

mod oracle;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

pub use oracle::{
    expected_band_power, expected_eeg_features, oracle_band_power, OracleComponent,
};

use crate::error::{Error, Result};
use crate::model::{
    Band, ChannelSpec, Content, DynamicRange, MarkerKind, Modality, RatingRecord, Recording,
    StimulusMarker, BASELINE_DURATION_S, EEG_MONTAGE, EOG_CHANNEL_COUNT,
    PERIPHERAL_FEATURE_NAMES,
};
use crate::par::Execution;
use crate::physioset::PhysioSet;
use crate::seed::rng_for;

pub const DEFAULT_EFFECT_ELECTRODES: [&str; 8] = ["O1", "O2", "Oz", "PO3", "PO4", "P3", "P4", "Pz"];

/// Class-specific offsets applied during stimulus periods.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeripheralEffect {
    pub hr_offset_bpm: f64,
    /// GSR drift in units per second.
    pub gsr_slope: f64,
    /// Temperature drift in units per second.
    pub temp_slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EffectSpec {
    pub bands: Vec<Band>,
    pub electrodes: Vec<String>,
    /// TMHDR over LDR power ratio of the effect bands, in dB.
    pub power_ratio_db: f64,
    pub hdr: PeripheralEffect,
    pub ldr: PeripheralEffect,
    /// Per-subject replacement of `power_ratio_db`.
    pub subject_power_ratio_db: BTreeMap<String, f64>,
    /// White EEG density per Hz.
    pub noise_floor: f64,
    /// Mean rating advantage of TMHDR on the 1-9 scale.
    pub rating_shift: f64,
    pub seed: u64,
}

impl Default for EffectSpec {
    fn default() -> Self {
        EffectSpec {
            bands: vec![Band::Gamma],
            electrodes: DEFAULT_EFFECT_ELECTRODES.iter().map(|s| s.to_string()).collect(),
            power_ratio_db: 3.0,
            hdr: PeripheralEffect {
                hr_offset_bpm: 2.0,
                gsr_slope: 0.005,
                temp_slope: 0.001,
            },
            ldr: PeripheralEffect::default(),
            subject_power_ratio_db: BTreeMap::new(),
            noise_floor: 1.0 / 128.0,
            rating_shift: 1.0,
            seed: 1,
        }
    }
}

impl EffectSpec {
    /// No class difference in any channel or rating.
    pub fn null(seed: u64) -> Self {
        EffectSpec {
            power_ratio_db: 0.0,
            hdr: PeripheralEffect::default(),
            rating_shift: 0.0,
            seed,
            ..EffectSpec::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64| v.is_finite();
        if !finite(self.power_ratio_db) || self.subject_power_ratio_db.values().any(|v| !finite(*v)) {
            return Err(Error::invalid("power ratio must be finite"));
        }
        for e in &self.electrodes {
            if !EEG_MONTAGE.contains(&e.as_str()) {
                return Err(Error::invalid(format!("effect electrode `{e}` is not in the montage")));
            }
        }
        if !(self.noise_floor >= 0.0 && self.noise_floor.is_finite()) {
            return Err(Error::invalid("noise floor must be a non-negative power density"));
        }
        for p in [&self.hdr, &self.ldr] {
            if ![p.hr_offset_bpm, p.gsr_slope, p.temp_slope].iter().all(|v| v.is_finite()) {
                return Err(Error::invalid("peripheral effects must be finite"));
            }
        }
        if !self.rating_shift.is_finite() {
            return Err(Error::invalid("rating shift must be finite"));
        }
        Ok(())
    }

    pub fn power_ratio_for(&self, subject_id: &str) -> f64 {
        self.subject_power_ratio_db
            .get(subject_id)
            .copied()
            .unwrap_or(self.power_ratio_db)
    }

    fn peripheral(&self, class: DynamicRange) -> PeripheralEffect {
        match class {
            DynamicRange::Tmhdr => self.hdr,
            DynamicRange::Ldr => self.ldr,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StimulusSlot {
    pub content: Content,
    /// Usable duration; the stimulus marker is longer by twice `trim_s`.
    pub duration_s: f64,
}

/// Session layout and signal-model parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthLayout {
    pub stimuli: Vec<StimulusSlot>,
    pub sample_rate: f64,
    pub trim_s: f64,
    pub segment_s: f64,
    /// Signal before the first and after the last period.
    pub lead_s: f64,
    /// EEG density per Hz added in theta, alpha, beta, gamma.
    pub band_density: [f64; 4],
    pub blink_rate_hz: f64,
    pub blink_amplitude: f64,
    pub eog_noise: f64,
    /// Standard deviation of beat-to-beat interval noise (s).
    pub hr_jitter_s: f64,
    /// Per-stimulus random spread of heart rate, GSR slope and temperature slope.
    pub hr_period_sd_bpm: f64,
    pub gsr_slope_sd: f64,
    pub temp_slope_sd: f64,
    pub gsr_noise: f64,
    pub pleth_noise: f64,
    pub with_peripheral: bool,
    pub with_eog: bool,
}

impl Default for SynthLayout {
    fn default() -> Self {
        SynthLayout {
            stimuli: [
                (Content::Hall, 40.0),
                (Content::Objects, 50.0),
                (Content::Sky, 30.0),
                (Content::Window, 20.0),
            ]
            .into_iter()
            .map(|(content, duration_s)| StimulusSlot {
                content,
                duration_s,
            })
            .collect(),
            sample_rate: 256.0,
            trim_s: 1.0,
            segment_s: 10.0,
            lead_s: 2.0,
            band_density: [0.15, 0.3, 0.05, 0.02],
            blink_rate_hz: 0.25,
            blink_amplitude: 20.0,
            eog_noise: 0.5,
            hr_jitter_s: 0.0,
            hr_period_sd_bpm: 3.0,
            gsr_slope_sd: 0.01,
            temp_slope_sd: 0.002,
            gsr_noise: 2e-5,
            pleth_noise: 0.01,
            with_peripheral: true,
            with_eog: true,
        }
    }
}

impl SynthLayout {
    pub fn validate(&self) -> Result<()> {
        if self.stimuli.is_empty() {
            return Err(Error::invalid("layout has no stimuli"));
        }
        if !(self.sample_rate >= 256.0 && self.sample_rate.is_finite()) {
            return Err(Error::invalid("generation rate must be at least 256 Hz"));
        }
        if self.stimuli.iter().any(|s| !(s.duration_s >= self.segment_s)) {
            return Err(Error::invalid("every stimulus must last at least one segment"));
        }
        let non_negative = [
            self.trim_s,
            self.lead_s,
            self.blink_rate_hz,
            self.blink_amplitude,
            self.eog_noise,
            self.hr_jitter_s,
            self.hr_period_sd_bpm,
            self.gsr_slope_sd,
            self.temp_slope_sd,
            self.gsr_noise,
            self.pleth_noise,
        ];
        if non_negative
            .iter()
            .chain(&self.band_density)
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return Err(Error::invalid("band power and noise parameters must be non-negative"));
        }
        if !(self.segment_s > 0.0) {
            return Err(Error::invalid("segment length must be positive"));
        }
        Ok(())
    }

    /// Stimulus segments produced per subject once both versions are shown.
    pub fn segments_per_subject(&self) -> usize {
        2 * self
            .stimuli
            .iter()
            .map(|s| (s.duration_s / self.segment_s + 1e-9).floor() as usize)
            .sum::<usize>()
    }
}

/// Biphasic blink waveform, 400 ms, peak magnitude normalized to 1.
pub fn blink_template(fs: f64) -> Vec<f64> {
    let n = (0.4 * fs).round() as usize;
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            let u = i as f64 / n as f64;
            (2.0 * PI * u).sin() * 0.5 * (1.0 - (2.0 * PI * u).cos())
        })
        .collect();
    let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    raw.into_iter().map(|v| v / peak).collect()
}

fn add_blinks(out: &mut [f64], onsets: &[usize], template: &[f64]) {
    for &o in onsets {
        for (k, v) in template.iter().enumerate() {
            if let Some(x) = out.get_mut(o + k) {
                *x += v;
            }
        }
    }
}

/// Blink onsets (samples) of a Poisson process.
fn poisson_onsets(rng: &mut ChaCha8Rng, rate: f64, n: usize, fs: f64) -> Vec<usize> {
    if rate <= 0.0 {
        return Vec::new();
    }
    let exp = Exp::new(rate).expect("positive rate");
    let mut t = rng.sample(exp);
    let mut out = Vec::new();
    while t * fs < n as f64 {
        out.push((t * fs) as usize);
        t += rng.sample(exp);
    }
    out
}

/// Gaussian noise of `n` samples whose one-sided density at frequency `f`
/// is `density(f)` (units²/Hz). DC and Nyquist carry no power.
pub fn shaped_noise(
    rng: &mut ChaCha8Rng,
    planner: &mut FftPlanner<f64>,
    n: usize,
    fs: f64,
    density: impl Fn(f64) -> f64,
) -> Vec<f64> {
    if n < 2 {
        return vec![0.0; n];
    }
    let mut spec = vec![Complex::new(0.0, 0.0); n];
    let half = n.div_ceil(2);
    for j in 1..half {
        let f = j as f64 * fs / n as f64;
        let s = (density(f) * fs * n as f64 / 4.0).sqrt();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        spec[j] = Complex::new(s * re, s * im);
        spec[n - j] = spec[j].conj();
    }
    planner.plan_fft_inverse(n).process(&mut spec);
    spec.iter().map(|c| c.re / n as f64).collect()
}

/// Band containing 1-Hz bin `k`, if any.
pub fn band_of_bin(k: i64) -> Option<Band> {
    Band::ALL.into_iter().find(|b| {
        let (lo, hi) = b.range();
        k as f64 >= lo && k as f64 <= hi
    })
}

/// EEG density per Hz in 1-Hz bin `k` for one electrode in one period.
pub fn eeg_density(
    layout: &SynthLayout,
    effect: &EffectSpec,
    subject_id: &str,
    electrode: &str,
    class: Option<DynamicRange>,
    k: i64,
) -> f64 {
    let band = band_of_bin(k);
    let level = band.map_or(0.0, |b| layout.band_density[Band::ALL.iter().position(|x| *x == b).expect("known band")]);
    let mut d = effect.noise_floor + level;
    if class == Some(DynamicRange::Tmhdr)
        && band.is_some_and(|b| effect.bands.contains(&b))
        && effect.electrodes.iter().any(|e| e == electrode)
    {
        d *= 10f64.powf(effect.power_ratio_for(subject_id) / 10.0);
    }
    d
}

/// Relative blink weight on each montage electrode.
pub fn blink_weight(electrode: &str) -> f64 {
    match electrode {
        "Fp1" | "Fp2" => 1.0,
        "AF3" | "AF4" => 0.6,
        "F7" | "F3" | "Fz" | "F4" | "F8" => 0.35,
        "FC1" | "FC2" | "FC5" | "FC6" => 0.15,
        "Cz" => 0.05,
        _ => 0.0,
    }
}

const EOG_WEIGHTS: [f64; EOG_CHANNEL_COUNT] = [1.0, 0.8, -0.6, -0.5];
const GSR_OSC_HZ: f64 = 0.1;
const GSR_OSC_AMP: f64 = 0.05;
const RESP_HZ: f64 = 0.25;

#[derive(Clone, Debug, PartialEq)]
enum PeriodKind {
    Lead,
    Baseline,
    Stimulus(usize),
}

#[derive(Clone, Debug)]
struct Period {
    start_s: f64,
    end_s: f64,
    kind: PeriodKind,
    class: Option<DynamicRange>,
    hr_bpm: f64,
    gsr_slope: f64,
    temp_slope: f64,
}

/// Deterministic part of one subject's session.
#[derive(Clone, Debug)]
struct SubjectModel {
    subject_id: String,
    periods: Vec<Period>,
    gsr0: f64,
    gsr_phase: f64,
    temp0: f64,
    resp_amp: f64,
    resp_phase: f64,
    beats: Vec<f64>,
    total_s: f64,
}

impl SubjectModel {
    fn integrate(&self, t: f64, slope: impl Fn(&Period) -> f64) -> f64 {
        self.periods
            .iter()
            .map(|p| slope(p) * (t.min(p.end_s) - p.start_s).max(0.0))
            .sum()
    }

    fn gsr(&self, t: f64) -> f64 {
        self.gsr0
            + self.integrate(t, |p| p.gsr_slope)
            + GSR_OSC_AMP * (2.0 * PI * GSR_OSC_HZ * t + self.gsr_phase).sin()
    }

    fn temp(&self, t: f64) -> f64 {
        self.temp0 + self.integrate(t, |p| p.temp_slope)
    }

    fn resp(&self, t: f64) -> f64 {
        self.resp_amp * (2.0 * PI * RESP_HZ * t + self.resp_phase).sin()
    }

    fn hr_at(&self, t: f64) -> f64 {
        self.periods
            .iter()
            .find(|p| t >= p.start_s && t < p.end_s)
            .or(self.periods.last())
            .map_or(70.0, |p| p.hr_bpm)
    }
}

/// Pulse waveform relative to beat time: systolic peak then a smaller
/// dicrotic wave.
pub fn pulse_shape(u: f64) -> f64 {
    if !(-0.5..1.5).contains(&u) {
        return 0.0;
    }
    (-(u - 0.12).powi(2) / (2.0 * 0.05f64.powi(2))).exp()
        + 0.4 * (-(u - 0.4).powi(2) / (2.0 * 0.08f64.powi(2))).exp()
}

/// Noise-free plethysmograph of `n` samples with pulses at `beats` (s).
pub fn pleth_signal(beats: &[f64], fs: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let reach = (1.5 * fs) as isize;
    for &b in beats {
        let c = (b * fs).round() as isize;
        for i in (c - reach).max(0)..(c + reach).min(n as isize) {
            out[i as usize] += pulse_shape(i as f64 / fs - b);
        }
    }
    out
}

/// Ground truth of one segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentTruth {
    pub segment: String,
    pub stimulus_id: String,
    pub window_index: usize,
    pub class: DynamicRange,
    pub content: Content,
    pub eeg: BTreeMap<String, f64>,
    pub peripheral: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub subject_id: String,
    pub power_ratio_db: f64,
    pub segments: Vec<SegmentTruth>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub effect: EffectSpec,
    pub layout: SynthLayout,
    pub subjects: Vec<SubjectTruth>,
}

impl GroundTruth {
    pub fn segment(&self, reference: &str) -> Option<&SegmentTruth> {
        self.subjects
            .iter()
            .flat_map(|s| &s.segments)
            .find(|s| s.segment == reference)
    }
}

#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub set: PhysioSet,
    pub truth: GroundTruth,
}

pub fn subject_id(index: usize) -> String {
    format!("s{:02}", index + 1)
}

pub fn stimulus_id(content: Content, dr: DynamicRange) -> String {
    format!("{}_{}", content.as_str(), dr.as_str().to_ascii_lowercase())
}

pub fn generate_dataset(
    n_subjects: usize,
    layout: &SynthLayout,
    effect: &EffectSpec,
) -> Result<SynthDataset> {
    generate_dataset_with(n_subjects, layout, effect, Execution::default())
}

pub fn generate_dataset_with(
    n_subjects: usize,
    layout: &SynthLayout,
    effect: &EffectSpec,
    exec: Execution,
) -> Result<SynthDataset> {
    if n_subjects == 0 {
        return Err(Error::invalid("at least one subject is required"));
    }
    layout.validate()?;
    effect.validate()?;
    let per_subject = exec.map_range(n_subjects, |i| generate_subject(i, layout, effect));
    let mut recordings = Vec::with_capacity(n_subjects);
    let mut ratings = Vec::new();
    let mut subjects = Vec::with_capacity(n_subjects);
    for (rec, r, truth) in per_subject {
        recordings.push(rec);
        ratings.extend(r);
        subjects.push(truth);
    }
    Ok(SynthDataset {
        set: PhysioSet { recordings, ratings },
        truth: GroundTruth {
            seed: effect.seed,
            effect: effect.clone(),
            layout: layout.clone(),
            subjects,
        },
    })
}

fn build_model(index: usize, layout: &SynthLayout, effect: &EffectSpec) -> SubjectModel {
    let mut rng = rng_for(effect.seed, &[index as u64, 0]);
    let mut order: Vec<(usize, DynamicRange)> = (0..layout.stimuli.len())
        .flat_map(|i| [(i, DynamicRange::Ldr), (i, DynamicRange::Tmhdr)])
        .collect();
    order.shuffle(&mut rng);

    let base_hr = rng.random_range(60.0..80.0);
    let gsr0 = rng.random_range(2.0..6.0);
    let temp0 = rng.random_range(32.5..34.5);
    let resp_amp = rng.random_range(0.5..1.5);
    let resp_phase = rng.random_range(0.0..2.0 * PI);
    let gsr_phase = rng.random_range(0.0..2.0 * PI);

    let neutral = |start_s: f64, end_s: f64, kind: PeriodKind| Period {
        start_s,
        end_s,
        kind,
        class: None,
        hr_bpm: base_hr,
        gsr_slope: 0.0,
        temp_slope: 0.0,
    };
    let mut periods = vec![neutral(0.0, layout.lead_s, PeriodKind::Lead)];
    let mut t = layout.lead_s;
    for (slot, dr) in order {
        periods.push(neutral(t, t + BASELINE_DURATION_S, PeriodKind::Baseline));
        t += BASELINE_DURATION_S;
        let len = layout.stimuli[slot].duration_s + 2.0 * layout.trim_s;
        let fx = effect.peripheral(dr);
        let g: f64 = rng.sample(StandardNormal);
        let h: f64 = rng.sample(StandardNormal);
        let k: f64 = rng.sample(StandardNormal);
        periods.push(Period {
            start_s: t,
            end_s: t + len,
            kind: PeriodKind::Stimulus(slot),
            class: Some(dr),
            hr_bpm: base_hr + fx.hr_offset_bpm + layout.hr_period_sd_bpm * h,
            gsr_slope: fx.gsr_slope + layout.gsr_slope_sd * g,
            temp_slope: fx.temp_slope + layout.temp_slope_sd * k,
        });
        t += len;
    }
    periods.push(neutral(t, t + layout.lead_s, PeriodKind::Lead));
    let total_s = t + layout.lead_s;

    let mut model = SubjectModel {
        subject_id: subject_id(index),
        periods,
        gsr0,
        gsr_phase,
        temp0,
        resp_amp,
        resp_phase,
        beats: Vec::new(),
        total_s,
    };
    let mut beat = -rng.random_range(0.0..1.0);
    while beat < total_s + 1.0 {
        model.beats.push(beat);
        let jitter: f64 = rng.sample(StandardNormal);
        let ibi = 60.0 / model.hr_at(beat.max(0.0)) + layout.hr_jitter_s * jitter;
        beat += ibi.max(0.25);
    }
    model
}

fn generate_subject(
    index: usize,
    layout: &SynthLayout,
    effect: &EffectSpec,
) -> (Recording, Vec<RatingRecord>, SubjectTruth) {
    let model = build_model(index, layout, effect);
    let fs = layout.sample_rate;
    let n = (model.total_s * fs).round() as usize;
    let mut rng = rng_for(effect.seed, &[index as u64, 1]);
    let mut planner = FftPlanner::new();

    let template = blink_template(fs);
    let mut blink = vec![0.0; n];
    add_blinks(&mut blink, &poisson_onsets(&mut rng, layout.blink_rate_hz, n, fs), &template);

    let mut channels = Vec::new();
    let mut samples: Vec<Vec<f32>> = Vec::new();
    for name in EEG_MONTAGE {
        let mut x = Vec::with_capacity(n);
        for p in &model.periods {
            let a = (p.start_s * fs).round() as usize;
            let b = ((p.end_s * fs).round() as usize).min(n);
            let chunk = shaped_noise(&mut rng, &mut planner, b - a, fs, |f| {
                eeg_density(layout, effect, &model.subject_id, name, p.class, f.round() as i64)
            });
            x.extend(chunk);
        }
        x.resize(n, 0.0);
        let w = blink_weight(name) * layout.blink_amplitude;
        channels.push(ChannelSpec::new(name, Modality::Eeg, fs));
        samples.push(x.iter().zip(&blink).map(|(v, b)| (v + w * b) as f32).collect());
    }
    if layout.with_eog {
        for (i, w) in EOG_WEIGHTS.iter().enumerate() {
            channels.push(ChannelSpec::new(format!("EXG{}", i + 1), Modality::Eog, fs));
            samples.push(
                blink
                    .iter()
                    .map(|b| {
                        let e: f64 = rng.sample(StandardNormal);
                        (w * layout.blink_amplitude * b + layout.eog_noise * e) as f32
                    })
                    .collect(),
            );
        }
    }
    if layout.with_peripheral {
        let time = |i: usize| i as f64 / fs;
        let gsr: Vec<f32> = (0..n)
            .map(|i| {
                let e: f64 = rng.sample(StandardNormal);
                (model.gsr(time(i)) + layout.gsr_noise * e) as f32
            })
            .collect();
        let resp: Vec<f32> = (0..n).map(|i| model.resp(time(i)) as f32).collect();
        let pleth: Vec<f32> = pleth_signal(&model.beats, fs, n)
            .into_iter()
            .map(|v| {
                let e: f64 = rng.sample(StandardNormal);
                (v + layout.pleth_noise * e) as f32
            })
            .collect();
        let temp: Vec<f32> = (0..n).map(|i| model.temp(time(i)) as f32).collect();
        for (name, modality, x) in [
            ("GSR", Modality::Gsr, gsr),
            ("Resp", Modality::Resp, resp),
            ("Plet", Modality::Pleth, pleth),
            ("Temp", Modality::Temp, temp),
        ] {
            channels.push(ChannelSpec::new(name, modality, fs));
            samples.push(x);
        }
    }

    let mut markers = Vec::new();
    let mut periods = model.periods.iter().peekable();
    while let Some(p) = periods.next() {
        if p.kind != PeriodKind::Baseline {
            continue;
        }
        let stim = periods.next().expect("baseline precedes a stimulus");
        let PeriodKind::Stimulus(slot) = stim.kind else {
            unreachable!("baseline precedes a stimulus")
        };
        let content = layout.stimuli[slot].content;
        let dr = stim.class.expect("stimulus has a class");
        let id = stimulus_id(content, dr);
        for (q, kind) in [(p, MarkerKind::Baseline), (stim, MarkerKind::Stimulus)] {
            markers.push(StimulusMarker {
                start_s: q.start_s,
                end_s: q.end_s,
                kind,
                content,
                dynamic_range: dr,
                stimulus_id: id.clone(),
            });
        }
    }

    let ratings = generate_ratings(&mut rng, &model.subject_id, layout, effect);
    let truth = subject_truth(&model, layout, effect);
    let rec = Recording {
        subject_id: model.subject_id.clone(),
        channels,
        samples,
        markers,
    };
    (rec, ratings, truth)
}

fn generate_ratings(
    rng: &mut ChaCha8Rng,
    subject: &str,
    layout: &SynthLayout,
    effect: &EffectSpec,
) -> Vec<RatingRecord> {
    let mut normal = |mean: f64, sd: f64| -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        mean + sd * z
    };
    let mut out = Vec::new();
    for slot in &layout.stimuli {
        let ldr: Vec<f64> = (0..3).map(|_| normal(5.0, 1.5)).collect();
        let hdr: Vec<f64> = ldr.iter().map(|q| q + effect.rating_shift + normal(0.0, 1.0)).collect();
        let comp: Vec<i8> = (0..2)
            .map(|_| normal(1.5 * effect.rating_shift, 1.0).round().clamp(-3.0, 3.0) as i8)
            .collect();
        for (dr, q) in [(DynamicRange::Ldr, &ldr), (DynamicRange::Tmhdr, &hdr)] {
            let score = |v: f64| v.round().clamp(1.0, 9.0) as u8;
            out.push(RatingRecord {
                subject_id: subject.to_string(),
                content: slot.content,
                dynamic_range: dr,
                q1: score(q[0]),
                q2: score(q[1]),
                q3: score(q[2]),
                comp_q1: comp[0],
                comp_q2: comp[1],
            });
        }
    }
    out
}

/// Time of steepest rise of the pulse waveform after the beat time.
fn pulse_fiducial_offset() -> f64 {
    let dt = 1e-4;
    (0..5000)
        .map(|i| i as f64 * dt)
        .max_by(|a, b| {
            let da = pulse_shape(a + dt) - pulse_shape(*a);
            let db = pulse_shape(b + dt) - pulse_shape(*b);
            da.total_cmp(&db)
        })
        .unwrap_or(0.0)
}

fn subject_truth(model: &SubjectModel, layout: &SynthLayout, effect: &EffectSpec) -> SubjectTruth {
    use crate::stats::{mean, sample_std, sample_variance};
    const FS: f64 = crate::model::TARGET_RATE;
    let fid = pulse_fiducial_offset();
    let eeg_expected = |class| expected_eeg_features(layout, effect, &model.subject_id, class);
    let mut segments = Vec::new();
    for p in &model.periods {
        let PeriodKind::Stimulus(slot) = p.kind else { continue };
        let dr = p.class.expect("stimulus has a class");
        let content = layout.stimuli[slot].content;
        let id = stimulus_id(content, dr);
        let eeg = eeg_expected(dr);
        let win = (layout.segment_s * FS).round() as usize;
        let first = (p.start_s * FS).round() as usize + (layout.trim_s * FS).round() as usize;
        let count = (layout.stimuli[slot].duration_s / layout.segment_s + 1e-9).floor() as usize;
        for w in 0..count {
            let s0 = first + w * win;
            let times: Vec<f64> = (s0..s0 + win).map(|i| i as f64 / FS).collect();
            let mut peripheral = BTreeMap::new();
            if layout.with_peripheral {
                let gsr: Vec<f64> = times.iter().map(|t| model.gsr(*t)).collect();
                let dg: Vec<f64> = gsr.windows(2).map(|v| (v[1] - v[0]) * FS).collect();
                let resp: Vec<f64> = times.iter().map(|t| model.resp(*t)).collect();
                let dr_: Vec<f64> = resp.windows(2).map(|v| (v[1] - v[0]) * FS).collect();
                let temp: Vec<f64> = times.iter().map(|t| model.temp(*t)).collect();
                let dt: Vec<f64> = temp.windows(2).map(|v| (v[1] - v[0]) * FS).collect();
                let edge = crate::features::peripheral::PULSE_EDGE_S;
                let (t0, t1) = (times[0] + edge, times[win - 1] - edge);
                let beats: Vec<f64> = model
                    .beats
                    .iter()
                    .map(|b| b + fid)
                    .filter(|b| *b > t0 && *b < t1)
                    .collect();
                let hr: Vec<f64> = beats.windows(2).map(|v| 60.0 / (v[1] - v[0])).collect();
                let hrv: Vec<f64> = hr.windows(2).map(|v| v[1] - v[0]).collect();
                let noise = layout.gsr_noise;
                let values = [
                    mean(&gsr),
                    (sample_variance(&gsr) + noise * noise).sqrt(),
                    mean(&dg),
                    (sample_variance(&dg) + 2.0 * (noise * FS).powi(2)).sqrt(),
                    mean(&dr_),
                    sample_std(&resp),
                    1.0 / RESP_HZ,
                    mean(&hr),
                    sample_std(&hr),
                    mean(&hrv),
                    sample_std(&hrv),
                    mean(&temp),
                    mean(&dt),
                ];
                for (name, v) in PERIPHERAL_FEATURE_NAMES.iter().zip(values) {
                    peripheral.insert(name.to_string(), v);
                }
            }
            segments.push(SegmentTruth {
                segment: format!("{}/{}/{}", model.subject_id, id, w),
                stimulus_id: id.clone(),
                window_index: w,
                class: dr,
                content,
                eeg: eeg.clone(),
                peripheral,
            });
        }
    }
    SubjectTruth {
        subject_id: model.subject_id.clone(),
        power_ratio_db: effect.power_ratio_for(&model.subject_id),
        segments,
    }
}

/// Four-channel EEG mixture of a blink train, a modulated 10 Hz rhythm, a
/// Laplacian and a uniform source, with two EOG references of the blink.
#[derive(Clone, Debug)]
pub struct OcularMixture {
    pub eeg: Vec<Vec<f64>>,
    pub eog: Vec<Vec<f64>>,
    /// Unit-variance sources; index 0 is the blink train.
    pub sources: Vec<Vec<f64>>,
    /// `mixing[channel][source]`.
    pub mixing: Vec<Vec<f64>>,
}

pub fn ocular_mixture(seed: u64, n: usize) -> OcularMixture {
    let fs = 256.0;
    let mut rng = rng_for(seed, &[0x0C]);
    let template = blink_template(fs);
    let mut blink = vec![0.0; n];
    let mut onsets = Vec::new();
    let mut t = rng.random_range(0.2..1.5);
    while ((t + 0.4) * fs) < n as f64 {
        onsets.push((t * fs) as usize);
        t += rng.random_range(1.5..4.0);
    }
    add_blinks(&mut blink, &onsets, &template);
    let phase = rng.random_range(0.0..2.0 * PI);
    let alpha: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            (2.0 * PI * 10.0 * t + phase).sin() * (1.0 + 0.5 * (2.0 * PI * 0.3 * t).sin())
        })
        .collect();
    let laplace: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.random_range(-0.5..0.5);
            -u.signum() * (1.0 - 2.0 * u.abs()).max(1e-300).ln()
        })
        .collect();
    let uniform: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sources: Vec<Vec<f64>> = [blink.clone(), alpha, laplace, uniform]
        .into_iter()
        .map(|s| {
            let m = crate::stats::mean(&s);
            let sd = crate::stats::sample_std(&s).max(1e-12);
            s.iter().map(|v| (v - m) / sd).collect()
        })
        .collect();

    let blink_gain = [3.0, 2.0, 1.0, 0.5];
    let mixing: Vec<Vec<f64>> = (0..4)
        .map(|r| {
            (0..4)
                .map(|c| {
                    if c == 0 {
                        blink_gain[r] * rng.random_range(0.8..1.2)
                    } else {
                        f64::from(u8::from(r == c)) + rng.random_range(-0.6..0.6)
                    }
                })
                .collect()
        })
        .collect();
    let eeg: Vec<Vec<f64>> = mixing
        .iter()
        .map(|row| {
            (0..n)
                .map(|i| row.iter().zip(&sources).map(|(a, s)| a * s[i]).sum())
                .collect()
        })
        .collect();
    let eog: Vec<Vec<f64>> = [(1.0, 0.05), (-0.7, 0.1)]
        .iter()
        .map(|(g, noise)| {
            sources[0]
                .iter()
                .map(|b| {
                    let e: f64 = rng.sample(StandardNormal);
                    g * b + noise * e
                })
                .collect()
        })
        .collect();
    OcularMixture {
        eeg,
        eog,
        sources,
        mixing,
    }
}

#[cfg(test)]
mod tests;
