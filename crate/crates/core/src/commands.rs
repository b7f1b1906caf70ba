//! Command implementations shared by the binary and the test suites.
//! Each command reads its inputs, runs the pipeline and writes its outputs
//! deterministically; printing and exit codes are left to the caller.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evaluate::{evaluate, format_summary, write_summary_csv, EvaluationReport};
use crate::features::{segment_features, write_features_csv, SegmentFeatures};
use crate::model::{ChannelSpec, FeatureModality, Recording};
use crate::par::{with_jobs, Execution};
use crate::physioset::{inspect_physioset, load_physioset, save_physioset, save_subject, PhysioSet};
use crate::preprocess::{preprocess_recording, segment, PreprocessConfig, ProcessedRecording};
use crate::ratings::{ratings_report, write_ratings_csv};
use crate::selection::{selection_report, write_feature_counts, write_group_summary, write_topography};
use crate::synth::generate_dataset_with;

pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SELECTION_EEG_FILE: &str = "selection_eeg.csv";
pub const SELECTION_PERI_FILE: &str = "selection_peri.csv";
pub const SELECTION_BANDS_FILE: &str = "selection_bands.csv";
pub const SELECTION_SENSORS_FILE: &str = "selection_sensors.csv";
pub const TOPOGRAPHY_FILE: &str = "topography.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationOutcome {
    pub subjects: usize,
    /// One line per violation; empty when the dataset is clean.
    pub violations: Vec<String>,
}

impl ValidationOutcome {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn cmd_validate(path: &Path) -> Result<ValidationOutcome> {
    let subjects = inspect_physioset(path)?;
    let mut violations = Vec::new();
    for (raw, v) in &subjects {
        for x in v {
            violations.push(format!("{}: {x}", raw.dir.display()));
        }
    }
    if violations.is_empty() {
        // Cross-subject and rating checks.
        load_physioset(path)?;
    }
    Ok(ValidationOutcome { subjects: subjects.len(), violations })
}

fn execution(cfg: &RunConfig) -> Execution {
    if cfg.jobs == 1 {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

/// Preprocess, segment and extract features for every recording.
pub fn dataset_features(
    set: &PhysioSet,
    cfg: &PreprocessConfig,
    exec: Execution,
) -> Result<Vec<SegmentFeatures>> {
    let per_subject = exec.map_range(set.recordings.len(), |i| -> Result<Vec<SegmentFeatures>> {
        let rec = &set.recordings[i];
        let ctx = |e: Error| e.context(format!("subject {}", rec.subject_id));
        let processed = preprocess_recording(rec, cfg).map_err(ctx)?;
        let segments = segment(&processed, cfg).map_err(ctx)?;
        segments
            .iter()
            .map(|s| segment_features(s).map_err(|e| e.context(format!("segment {}", s.reference()))))
            .collect()
    });
    let mut out = Vec::new();
    for r in per_subject {
        out.extend(r?);
    }
    Ok(out)
}

fn to_recording(p: &ProcessedRecording) -> Recording {
    Recording {
        subject_id: p.subject_id.clone(),
        channels: p
            .channels
            .iter()
            .map(|c| ChannelSpec::new(c.name.clone(), c.modality, p.sample_rate))
            .collect(),
        samples: p.samples.iter().map(|x| x.iter().map(|v| *v as f32).collect()).collect(),
        markers: p.markers.clone(),
    }
}

/// Write the cleaned, re-referenced recordings in dataset layout.
pub fn cmd_preprocess(input: &Path, out: &Path, cfg: &RunConfig) -> Result<usize> {
    cfg.preprocess.validate()?;
    let set = load_physioset(input)?;
    let exec = execution(cfg);
    with_jobs(cfg.jobs, || {
        let processed = exec.map_range(set.recordings.len(), |i| {
            preprocess_recording(&set.recordings[i], &cfg.preprocess)
                .map_err(|e| e.context(format!("subject {}", set.recordings[i].subject_id)))
        });
        fs::create_dir_all(out)?;
        for p in processed {
            let p = p?;
            let ratings: Vec<_> = set.ratings_for(&p.subject_id).collect();
            save_subject(&to_recording(&p), &ratings, &out.join(&p.subject_id))?;
        }
        Ok(set.recordings.len())
    })
}

/// Write `features_eeg.csv` and `features_peri.csv`; returns the segment count.
pub fn cmd_extract(input: &Path, out: &Path, cfg: &RunConfig) -> Result<usize> {
    cfg.preprocess.validate()?;
    let set = load_physioset(input)?;
    let feats = with_jobs(cfg.jobs, || dataset_features(&set, &cfg.preprocess, execution(cfg)))?;
    fs::create_dir_all(out)?;
    write_features_csv(fs::File::create(out.join("features_eeg.csv"))?, FeatureModality::Eeg, &feats)?;
    write_features_csv(fs::File::create(out.join("features_peri.csv"))?, FeatureModality::Peripheral, &feats)?;
    Ok(feats.len())
}

/// Evaluate pre-extracted features and write every report file.
pub fn evaluate_features(
    feats: &[SegmentFeatures],
    set: &PhysioSet,
    out: &Path,
    cfg: &RunConfig,
) -> Result<EvaluationReport> {
    let mut report = with_jobs(cfg.jobs, || evaluate(feats, &set.ratings, &cfg.evaluate, execution(cfg)))?;
    report.config = Some(serde_json::to_value(cfg)?);
    write_reports(&report, out)?;
    Ok(report)
}

pub fn cmd_evaluate(input: &Path, out: &Path, cfg: &RunConfig) -> Result<EvaluationReport> {
    cfg.validate()?;
    let set = load_physioset(input)?;
    let feats = with_jobs(cfg.jobs, || dataset_features(&set, &cfg.preprocess, execution(cfg)))?;
    evaluate_features(&feats, &set, out, cfg)
}

pub fn write_reports(report: &EvaluationReport, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut json = serde_json::to_vec_pretty(report)?;
    json.push(b'\n');
    fs::write(out.join(REPORT_FILE), json)?;
    write_summary_csv(fs::File::create(out.join(SUMMARY_FILE))?, report)?;
    let find = |m: FeatureModality| {
        report
            .selection
            .iter()
            .find(|s| s.modality == m)
            .cloned()
            .unwrap_or_else(|| selection_report(m, &[]))
    };
    let (eeg, peri) = (find(FeatureModality::Eeg), find(FeatureModality::Peripheral));
    write_feature_counts(fs::File::create(out.join(SELECTION_EEG_FILE))?, &eeg)?;
    write_feature_counts(fs::File::create(out.join(SELECTION_PERI_FILE))?, &peri)?;
    write_group_summary(fs::File::create(out.join(SELECTION_BANDS_FILE))?, &eeg)?;
    write_group_summary(fs::File::create(out.join(SELECTION_SENSORS_FILE))?, &peri)?;
    write_topography(fs::File::create(out.join(TOPOGRAPHY_FILE))?, &eeg)?;
    Ok(())
}

pub fn summary_text(report: &EvaluationReport) -> String {
    format_summary(report)
}

/// Rating statistics as `ratings_report.json` and `ratings.csv`; returns the CSV text.
pub fn cmd_ratings(input: &Path, out: &Path, cfg: &RunConfig) -> Result<String> {
    let set = load_physioset(input)?;
    if set.ratings.is_empty() {
        return Err(Error::MissingRating(format!("no ratings found under {}", input.display())));
    }
    let report = ratings_report(&set.ratings, cfg.ratings.test)?;
    fs::create_dir_all(out)?;
    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    fs::write(out.join("ratings_report.json"), json)?;
    let mut csv = Vec::new();
    write_ratings_csv(&mut csv, &report)?;
    fs::write(out.join("ratings.csv"), &csv)?;
    Ok(String::from_utf8_lossy(&csv).into_owned())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOutcome {
    pub seed: u64,
    pub subjects: usize,
    /// SHA-256 over every written file (relative path and bytes, sorted by path).
    pub checksum: String,
}

fn files_under(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn directory_checksum(root: &Path) -> Result<String> {
    let mut h = Sha256::new();
    for f in files_under(root)? {
        let rel = f.strip_prefix(root).unwrap_or(&f).to_string_lossy().replace('\\', "/");
        h.update(rel.as_bytes());
        h.update([0u8]);
        h.update(fs::read(&f)?);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

pub fn cmd_synth(out: &Path, cfg: &RunConfig) -> Result<SynthOutcome> {
    cfg.synth.validate()?;
    let s = &cfg.synth;
    let data = with_jobs(cfg.jobs, || generate_dataset_with(s.subjects, &s.layout, &s.effect, execution(cfg)))?;
    save_physioset(&data.set, out)?;
    let mut json = serde_json::to_vec_pretty(&data.truth)?;
    json.push(b'\n');
    fs::write(out.join(GROUND_TRUTH_FILE), json)?;
    Ok(SynthOutcome {
        seed: s.effect.seed,
        subjects: s.subjects,
        checksum: directory_checksum(out)?,
    })
}
