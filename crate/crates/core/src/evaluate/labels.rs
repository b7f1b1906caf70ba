//! Binary task labels. Class A is the tone-mapped HDR video or a "high"
//! rating (strictly greater than the threshold).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SegmentFeatures;
use crate::model::{DynamicRange, RatingRecord};

pub const RATING_THRESHOLD: u8 = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    HdrVsLdr,
    Q1HighLow,
    Q3HighLow,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::HdrVsLdr => "hdr",
            Task::Q1HighLow => "q1",
            Task::Q3HighLow => "q3",
        }
    }

    pub fn class_names(self) -> [&'static str; 2] {
        match self {
            Task::HdrVsLdr => ["TMHDR", "LDR"],
            _ => ["high", "low"],
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hdr" | "hdr_vs_ldr" => Ok(Task::HdrVsLdr),
            "q1" | "q1_high_low" => Ok(Task::Q1HighLow),
            "q3" | "q3_high_low" => Ok(Task::Q3HighLow),
            other => Err(Error::invalid(format!("unknown task `{other}` (hdr, q1, q3)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task: Task,
    pub threshold: u8,
    /// Subjects left out before labelling.
    pub excluded_subjects: Vec<String>,
}

impl TaskSpec {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            threshold: RATING_THRESHOLD,
            excluded_subjects: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub subject_id: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExamples {
    /// Indices into the feature list, grouped by subject in input order.
    pub indices: Vec<usize>,
    pub is_a: Vec<bool>,
    pub subjects: Vec<String>,
    pub excluded: Vec<Exclusion>,
}

fn class_a(seg: &SegmentFeatures, ratings: &[RatingRecord], spec: &TaskSpec) -> Result<bool> {
    let score = |q: fn(&RatingRecord) -> u8| -> Result<bool> {
        let r = ratings
            .iter()
            .find(|r| {
                r.subject_id == seg.segment.subject_id
                    && r.content == seg.labels.content
                    && r.dynamic_range == seg.labels.dynamic_range
            })
            .ok_or_else(|| {
                Error::MissingRating(format!(
                    "{} ({} {})",
                    seg.segment,
                    seg.labels.content.as_str(),
                    seg.labels.dynamic_range.as_str()
                ))
            })?;
        Ok(q(r) > spec.threshold)
    };
    match spec.task {
        Task::HdrVsLdr => Ok(seg.labels.dynamic_range == DynamicRange::Tmhdr),
        Task::Q1HighLow => score(|r| r.q1),
        Task::Q3HighLow => score(|r| r.q3),
    }
}

/// Label every segment; subjects whose segments fall in one class only are
/// excluded with a logged notice.
pub fn derive_labels(
    features: &[SegmentFeatures],
    ratings: &[RatingRecord],
    spec: &TaskSpec,
) -> Result<LabeledExamples> {
    let mut subjects: Vec<String> = Vec::new();
    for f in features {
        if !subjects.contains(&f.segment.subject_id) {
            subjects.push(f.segment.subject_id.clone());
        }
    }
    let mut out = LabeledExamples {
        indices: Vec::new(),
        is_a: Vec::new(),
        subjects: Vec::new(),
        excluded: Vec::new(),
    };
    let (mut any_a, mut any_b) = (false, false);
    for s in subjects {
        if spec.excluded_subjects.contains(&s) {
            out.excluded.push(Exclusion { subject_id: s, reason: "excluded by configuration".into() });
            continue;
        }
        let mut idx = Vec::new();
        let mut labels = Vec::new();
        for (i, f) in features.iter().enumerate().filter(|(_, f)| f.segment.subject_id == s) {
            idx.push(i);
            labels.push(class_a(f, ratings, spec)?);
        }
        let n_a = labels.iter().filter(|a| **a).count();
        any_a |= n_a > 0;
        any_b |= n_a < labels.len();
        if n_a == 0 || n_a == labels.len() {
            let [a, b] = spec.task.class_names();
            let reason = format!(
                "single-class data for task {}: all {} segments are {}",
                spec.task,
                labels.len(),
                if n_a == 0 { b } else { a }
            );
            log::info!("excluding {s}: {reason}");
            out.excluded.push(Exclusion { subject_id: s, reason });
            continue;
        }
        out.indices.extend(idx);
        out.is_a.extend(labels);
        out.subjects.push(s);
    }
    if out.subjects.is_empty() {
        let msg = match (any_a, any_b) {
            (true, false) => "no class-B examples for any subject".to_string(),
            (false, true) => "no class-A examples for any subject".to_string(),
            _ => "no subject has examples of both classes".to_string(),
        };
        return Err(Error::TaskImpossible(format!("{msg} (task {})", spec.task)));
    }
    Ok(out)
}
