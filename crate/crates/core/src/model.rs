//! Domain types shared by every stage of the pipeline.
//!
//! A [`Recording`] is one subject session as stored on disk: raw `f32`
//! channels plus baseline/stimulus markers. Preprocessing turns it into
//! 256 Hz [`Segment`]s, and feature extraction turns segments into
//! [`FeatureVector`]s whose entry order is fixed by [`eeg_feature_names`] and
//! [`PERIPHERAL_FEATURE_NAMES`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample rate every processed signal is brought to.
pub const TARGET_RATE: f64 = 256.0;

/// Duration of the gray-screen baseline period in seconds.
pub const BASELINE_DURATION_S: f64 = 10.0;

pub const REFERENCE_CHANNEL: &str = "Cz";

/// The 32-electrode 10-20 cap, reference included.
pub const EEG_MONTAGE: [&str; 32] = [
    "Fp1", "AF3", "F7", "F3", "FC1", "FC5", "T7", "C3", "CP1", "CP5", "P7", "P3", "Pz", "PO3",
    "O1", "Oz", "O2", "PO4", "P4", "P8", "CP6", "CP2", "C4", "T8", "FC6", "FC2", "F4", "F8",
    "AF4", "Fp2", "Fz", "Cz",
];

/// Electrodes that carry features, in canonical (ASCII-sorted) order. Cz is
/// the reference and is excluded.
pub const EEG_ELECTRODES: [&str; 31] = [
    "AF3", "AF4", "C3", "C4", "CP1", "CP2", "CP5", "CP6", "F3", "F4", "F7", "F8", "FC1", "FC2",
    "FC5", "FC6", "Fp1", "Fp2", "Fz", "O1", "O2", "Oz", "P3", "P4", "P7", "P8", "PO3", "PO4",
    "Pz", "T7", "T8",
];

pub const EOG_CHANNEL_COUNT: usize = 4;

pub const PERIPHERAL_FEATURE_NAMES: [&str; 13] = [
    "GSR_M",
    "GSR_Std",
    "GSR_derM",
    "GSR_derStd",
    "Resp_derM",
    "Resp_Std",
    "Resp_peaktM",
    "Plet_HRM",
    "Plet_HRStd",
    "Plet_HRVM",
    "Plet_HRVStd",
    "Temp_M",
    "Temp_derM",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Modality {
    Eeg,
    Eog,
    Gsr,
    Pleth,
    Resp,
    Temp,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Eeg => "EEG",
            Modality::Eog => "EOG",
            Modality::Gsr => "GSR",
            Modality::Pleth => "PLETH",
            Modality::Resp => "RESP",
            Modality::Temp => "TEMP",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub name: String,
    pub modality: Modality,
    pub sample_rate: f64,
}

impl ChannelSpec {
    pub fn new(name: impl Into<String>, modality: Modality, sample_rate: f64) -> Self {
        ChannelSpec {
            name: name.into(),
            modality,
            sample_rate,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MarkerKind {
    Baseline,
    Stimulus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Content {
    Hall,
    Objects,
    Sky,
    Window,
}

impl Content {
    pub const ALL: [Content; 4] = [Content::Hall, Content::Objects, Content::Sky, Content::Window];

    pub fn as_str(self) -> &'static str {
        match self {
            Content::Hall => "hall",
            Content::Objects => "objects",
            Content::Sky => "sky",
            Content::Window => "window",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DynamicRange {
    Ldr,
    Tmhdr,
}

impl DynamicRange {
    pub fn as_str(self) -> &'static str {
        match self {
            DynamicRange::Ldr => "LDR",
            DynamicRange::Tmhdr => "TMHDR",
        }
    }
}

macro_rules! impl_enum_text {
    ($ty:ty, $($text:literal => $variant:expr),+ $(,)?) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $($text => Ok($variant),)+
                    other => Err(Error::invalid(format!(
                        "unknown {} `{}`", stringify!($ty), other
                    ))),
                }
            }
        }
    };
}

impl_enum_text!(Modality, "EEG" => Modality::Eeg, "EOG" => Modality::Eog, "GSR" => Modality::Gsr,
    "PLETH" => Modality::Pleth, "RESP" => Modality::Resp, "TEMP" => Modality::Temp);
impl_enum_text!(MarkerKind, "BASELINE" => MarkerKind::Baseline, "STIMULUS" => MarkerKind::Stimulus);
impl_enum_text!(Content, "hall" => Content::Hall, "objects" => Content::Objects,
    "sky" => Content::Sky, "window" => Content::Window);
impl_enum_text!(DynamicRange, "LDR" => DynamicRange::Ldr, "TMHDR" => DynamicRange::Tmhdr);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StimulusMarker {
    pub start_s: f64,
    pub end_s: f64,
    pub kind: MarkerKind,
    pub content: Content,
    pub dynamic_range: DynamicRange,
    pub stimulus_id: String,
}

impl StimulusMarker {
    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// One subject session: raw channels and their markers.
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub subject_id: String,
    pub channels: Vec<ChannelSpec>,
    pub samples: Vec<Vec<f32>>,
    pub markers: Vec<StimulusMarker>,
}

impl Recording {
    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }

    pub fn indices_of(&self, modality: Modality) -> Vec<usize> {
        self.channels
            .iter()
            .enumerate()
            .filter(|(_, c)| c.modality == modality)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn stimuli(&self) -> impl Iterator<Item = &StimulusMarker> {
        self.markers.iter().filter(|m| m.kind == MarkerKind::Stimulus)
    }

    /// The baseline bound to a stimulus (same id, BASELINE kind).
    pub fn baseline_for(&self, stimulus_id: &str) -> Option<&StimulusMarker> {
        self.markers
            .iter()
            .find(|m| m.kind == MarkerKind::Baseline && m.stimulus_id == stimulus_id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentLabels {
    pub dynamic_range: DynamicRange,
    pub content: Content,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SegmentRef {
    pub subject_id: String,
    pub stimulus_id: String,
    pub window_index: usize,
}

impl fmt::Display for SegmentRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.subject_id, self.stimulus_id, self.window_index)
    }
}

/// A fixed-length analysis window of one stimulus with its bound baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub subject_id: String,
    pub stimulus_id: String,
    pub window_index: usize,
    pub duration_s: f64,
    pub sample_rate: f64,
    pub channels: Vec<ChannelSpec>,
    pub samples: Vec<Vec<f64>>,
    pub baseline: Vec<Vec<f64>>,
    pub labels: SegmentLabels,
}

impl Segment {
    pub fn reference(&self) -> SegmentRef {
        SegmentRef {
            subject_id: self.subject_id.clone(),
            stimulus_id: self.stimulus_id.clone(),
            window_index: self.window_index,
        }
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }

    pub fn first_of(&self, modality: Modality) -> Option<usize> {
        self.channels.iter().position(|c| c.modality == modality)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Band {
    #[serde(rename = "theta")]
    Theta,
    #[serde(rename = "alpha")]
    Alpha,
    #[serde(rename = "beta")]
    Beta,
    #[serde(rename = "gamma")]
    Gamma,
}

impl Band {
    pub const ALL: [Band; 4] = [Band::Theta, Band::Alpha, Band::Beta, Band::Gamma];

    /// Inclusive edges in Hz.
    pub fn range(self) -> (f64, f64) {
        match self {
            Band::Theta => (3.0, 7.0),
            Band::Alpha => (8.0, 13.0),
            Band::Beta => (14.0, 29.0),
            Band::Gamma => (30.0, 47.0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Band::Theta => "theta",
            Band::Alpha => "alpha",
            Band::Beta => "beta",
            Band::Gamma => "gamma",
        }
    }
}

impl_enum_text!(Band, "theta" => Band::Theta, "alpha" => Band::Alpha, "beta" => Band::Beta,
    "gamma" => Band::Gamma);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FeatureModality {
    Eeg,
    Peripheral,
}

pub fn eeg_feature_name(electrode: &str, band: Band) -> String {
    format!("{electrode}_{}", band.as_str())
}

static EEG_FEATURE_NAMES: LazyLock<Vec<String>> = LazyLock::new(|| {
    EEG_ELECTRODES
        .iter()
        .flat_map(|e| Band::ALL.iter().map(move |b| eeg_feature_name(e, *b)))
        .collect()
});

static PERIPHERAL_NAMES: LazyLock<Vec<String>> =
    LazyLock::new(|| PERIPHERAL_FEATURE_NAMES.iter().map(|s| s.to_string()).collect());

/// 124 names: electrode-major, then theta, alpha, beta, gamma.
pub fn eeg_feature_names() -> &'static [String] {
    &EEG_FEATURE_NAMES
}

pub fn feature_names(modality: FeatureModality) -> &'static [String] {
    match modality {
        FeatureModality::Eeg => &EEG_FEATURE_NAMES,
        FeatureModality::Peripheral => &PERIPHERAL_NAMES,
    }
}

/// Ordered named feature values for one segment and one modality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub modality: FeatureModality,
    pub segment: SegmentRef,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(modality: FeatureModality, segment: SegmentRef, values: Vec<f64>) -> Result<Self> {
        let expected = feature_names(modality).len();
        if values.len() != expected {
            return Err(Error::invalid(format!(
                "{modality:?} feature vector needs {expected} entries, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "feature {} of {segment} is not finite",
                feature_names(modality)[i]
            )));
        }
        Ok(FeatureVector {
            modality,
            segment,
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn names(&self) -> &'static [String] {
        feature_names(self.modality)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        self.names()
            .iter()
            .map(String::as_str)
            .zip(self.values.iter().copied())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names()
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub subject_id: String,
    pub content: Content,
    pub dynamic_range: DynamicRange,
    pub q1: u8,
    pub q2: u8,
    pub q3: u8,
    pub comp_q1: i8,
    pub comp_q2: i8,
}

impl RatingRecord {
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        for (field, v) in [("q1", self.q1), ("q2", self.q2), ("q3", self.q3)] {
            if !(1..=9).contains(&v) {
                return Err((field, format!("{v} outside 1..9")));
            }
        }
        for (field, v) in [("comp_q1", self.comp_q1), ("comp_q2", self.comp_q2)] {
            if !(-3..=3).contains(&v) {
                return Err((field, format!("{v} outside -3..3")));
            }
        }
        if self.subject_id.is_empty() {
            return Err(("subject_id", "empty".into()));
        }
        Ok(())
    }
}

/// Per-class outcome counts of a binary classifier. Class A is the first class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_a: u64,
    pub false_a: u64,
    pub true_b: u64,
    pub false_b: u64,
}

impl ConfusionCounts {
    pub fn number_of_a(&self) -> u64 {
        self.true_a + self.false_a
    }

    pub fn number_of_b(&self) -> u64 {
        self.true_b + self.false_b
    }

    pub fn total(&self) -> u64 {
        self.number_of_a() + self.number_of_b()
    }

    /// Tally one prediction; `is_a` flags refer to class A.
    pub fn record(&mut self, truth_is_a: bool, predicted_is_a: bool) {
        match (truth_is_a, predicted_is_a) {
            (true, true) => self.true_a += 1,
            (true, false) => self.false_a += 1,
            (false, false) => self.true_b += 1,
            (false, true) => self.false_b += 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    EmptySubject,
    DuplicateChannel,
    BadSampleRate,
    ChannelCount,
    NonFiniteSample,
    ChannelLength,
    MarkerOrder,
    BaselineDuration,
    MarkerOverlap,
    UnboundStimulus,
    OrphanBaseline,
    DuplicateStimulusId,
    EegMontage,
    EogCount,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::EmptySubject => "EMPTY_SUBJECT",
            ViolationCode::DuplicateChannel => "DUPLICATE_CHANNEL",
            ViolationCode::BadSampleRate => "BAD_SAMPLE_RATE",
            ViolationCode::ChannelCount => "CHANNEL_COUNT",
            ViolationCode::NonFiniteSample => "NON_FINITE_SAMPLE",
            ViolationCode::ChannelLength => "CHANNEL_LENGTH",
            ViolationCode::MarkerOrder => "MARKER_ORDER",
            ViolationCode::BaselineDuration => "BASELINE_DURATION",
            ViolationCode::MarkerOverlap => "MARKER_OVERLAP",
            ViolationCode::UnboundStimulus => "UNBOUND_STIMULUS",
            ViolationCode::OrphanBaseline => "ORPHAN_BASELINE",
            ViolationCode::DuplicateStimulusId => "DUPLICATE_STIMULUS_ID",
            ViolationCode::EegMontage => "EEG_MONTAGE",
            ViolationCode::EogCount => "EOG_COUNT",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

const TIME_EPS: f64 = 1e-6;

/// Check every structural invariant of a recording. An empty result means the
/// recording is valid.
pub fn validate_recording(r: &Recording) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |code, message: String| out.push(Violation { code, message });

    if r.subject_id.trim().is_empty() {
        push(ViolationCode::EmptySubject, "subject_id is empty".into());
    }
    if r.samples.len() != r.channels.len() {
        push(
            ViolationCode::ChannelCount,
            format!(
                "{} channel specs but {} sample sequences",
                r.channels.len(),
                r.samples.len()
            ),
        );
    }

    let mut seen = BTreeSet::new();
    for c in &r.channels {
        if !seen.insert(c.name.as_str()) {
            push(
                ViolationCode::DuplicateChannel,
                format!("channel `{}` appears more than once", c.name),
            );
        }
        if !(c.sample_rate.is_finite() && c.sample_rate > 0.0) {
            push(
                ViolationCode::BadSampleRate,
                format!("channel `{}` has sample rate {}", c.name, c.sample_rate),
            );
        }
    }

    let span_end = r.markers.iter().map(|m| m.end_s).fold(0.0_f64, f64::max);
    for (c, s) in r.channels.iter().zip(&r.samples) {
        if let Some(i) = s.iter().position(|v| !v.is_finite()) {
            push(
                ViolationCode::NonFiniteSample,
                format!("channel `{}` sample {i} is not finite", c.name),
            );
        }
        if c.sample_rate > 0.0 {
            let covered = s.len() as f64 / c.sample_rate;
            if covered + TIME_EPS < span_end {
                push(
                    ViolationCode::ChannelLength,
                    format!(
                        "channel `{}` covers {covered:.3} s but markers end at {span_end:.3} s",
                        c.name
                    ),
                );
            }
        }
    }

    let eeg: BTreeSet<&str> = r
        .channels
        .iter()
        .filter(|c| c.modality == Modality::Eeg)
        .map(|c| c.name.as_str())
        .collect();
    if !eeg.is_empty() {
        let montage: BTreeSet<&str> = EEG_MONTAGE.iter().copied().collect();
        if eeg != montage {
            let missing: Vec<_> = montage.difference(&eeg).copied().collect();
            let extra: Vec<_> = eeg.difference(&montage).copied().collect();
            push(
                ViolationCode::EegMontage,
                format!("EEG channels differ from the 32-electrode montage (missing {missing:?}, unexpected {extra:?})"),
            );
        }
    }
    let eog = r.channels.iter().filter(|c| c.modality == Modality::Eog).count();
    if eog != 0 && eog != EOG_CHANNEL_COUNT {
        push(
            ViolationCode::EogCount,
            format!("{eog} EOG channels, expected {EOG_CHANNEL_COUNT}"),
        );
    }

    for m in &r.markers {
        if !(m.start_s.is_finite() && m.end_s.is_finite() && m.end_s > m.start_s && m.start_s >= 0.0)
        {
            push(
                ViolationCode::MarkerOrder,
                format!(
                    "marker `{}` has start {} and end {}",
                    m.stimulus_id, m.start_s, m.end_s
                ),
            );
        }
        if m.kind == MarkerKind::Baseline && (m.duration() - BASELINE_DURATION_S).abs() > TIME_EPS {
            push(
                ViolationCode::BaselineDuration,
                format!(
                    "baseline for `{}` lasts {} s, expected {BASELINE_DURATION_S} s",
                    m.stimulus_id,
                    m.duration()
                ),
            );
        }
    }

    let mut ordered: Vec<&StimulusMarker> = r.markers.iter().collect();
    ordered.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    for w in ordered.windows(2) {
        if w[1].start_s + TIME_EPS < w[0].end_s {
            push(
                ViolationCode::MarkerOverlap,
                format!(
                    "{:?} `{}` [{}, {}] overlaps {:?} `{}` [{}, {}]",
                    w[0].kind, w[0].stimulus_id, w[0].start_s, w[0].end_s,
                    w[1].kind, w[1].stimulus_id, w[1].start_s, w[1].end_s
                ),
            );
        }
    }

    let mut stimuli: BTreeMap<&str, usize> = BTreeMap::new();
    let mut baselines: BTreeMap<&str, Vec<&StimulusMarker>> = BTreeMap::new();
    for m in &r.markers {
        match m.kind {
            MarkerKind::Stimulus => *stimuli.entry(m.stimulus_id.as_str()).or_default() += 1,
            MarkerKind::Baseline => baselines.entry(m.stimulus_id.as_str()).or_default().push(m),
        }
    }
    for (id, n) in &stimuli {
        if *n > 1 {
            push(
                ViolationCode::DuplicateStimulusId,
                format!("stimulus id `{id}` used by {n} stimulus markers"),
            );
        }
    }
    for s in r.stimuli() {
        let bound = baselines.get(s.stimulus_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let preceding = bound.iter().filter(|b| b.end_s <= s.start_s + TIME_EPS).count();
        if bound.len() != 1 || preceding != 1 {
            push(
                ViolationCode::UnboundStimulus,
                format!(
                    "stimulus `{}` needs exactly one preceding baseline, found {}",
                    s.stimulus_id,
                    bound.len()
                ),
            );
        }
    }
    for id in baselines.keys() {
        if !stimuli.contains_key(id) {
            push(
                ViolationCode::OrphanBaseline,
                format!("baseline `{id}` is not bound to any stimulus"),
            );
        }
    }

    out
}
