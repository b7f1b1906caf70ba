//! Per-trial records and their aggregation into per-subject and overall
//! summaries.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::harness::{EvalConfig, EvalModality, Scenario};
use super::labels::{Exclusion, LabeledExamples, Task};
use super::metrics::{accuracy, balanced_accuracy, symmetric_f_measure, t_test_vs_chance};
use crate::classify::ClassifierPosterior;
use crate::error::Result;
use crate::fusion::weight_rmse;
use crate::model::{ConfusionCounts, FeatureModality};
use crate::selection::{selection_report, SelectionReport};
use crate::stats::{mean, sample_std};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalityTrial {
    pub hidden_n: usize,
    pub k: usize,
    /// Inner leave-one-out accuracy of the chosen configuration.
    pub inner_accuracy: Option<f64>,
    pub selected: Vec<String>,
    /// One per test example.
    pub posteriors: Vec<ClassifierPosterior>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionTrial {
    pub weight: f64,
    pub oracle_weight: f64,
    pub decisions: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub subject: String,
    pub trial: usize,
    pub rep: usize,
    pub test: Vec<String>,
    /// True where the test example belongs to class A.
    pub truth: Vec<bool>,
    pub eeg: Option<ModalityTrial>,
    pub peri: Option<ModalityTrial>,
    pub fusion: Option<FusionTrial>,
    pub errors: Vec<String>,
}

impl TrialRecord {
    /// Decisions of one modality (true = class A); `None` where it failed.
    pub fn decisions(&self, m: EvalModality) -> Vec<Option<bool>> {
        let n = self.truth.len();
        let from = |t: &Option<ModalityTrial>| match t {
            Some(t) => t.posteriors.iter().map(|p| Some(p.is_a())).collect(),
            None => vec![None; n],
        };
        match m {
            EvalModality::Eeg => from(&self.eeg),
            EvalModality::Peri => from(&self.peri),
            EvalModality::Fusion => match &self.fusion {
                Some(f) => f.decisions.iter().map(|d| Some(*d)).collect(),
                None => vec![None; n],
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepMetrics {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub f_measure: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
    /// Two-tailed one-sample t-test against chance; `None` for a single value.
    pub p: Option<f64>,
}

impl MetricSummary {
    fn of(values: &[f64], chance: f64) -> Self {
        Self {
            mean: mean(values),
            std: sample_std(values),
            p: t_test_vs_chance(values, chance).ok(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: MetricSummary,
    pub balanced_accuracy: MetricSummary,
    pub f_measure: MetricSummary,
}

impl MetricSet {
    fn of(values: &[RepMetrics], chance: f64) -> Self {
        let pick = |f: fn(&RepMetrics) -> f64| values.iter().map(f).collect::<Vec<f64>>();
        Self {
            accuracy: MetricSummary::of(&pick(|m| m.accuracy), chance),
            balanced_accuracy: MetricSummary::of(&pick(|m| m.balanced_accuracy), chance),
            f_measure: MetricSummary::of(&pick(|m| m.f_measure), chance),
        }
    }

    pub fn entries(&self) -> [(&'static str, &MetricSummary); 3] {
        [
            ("accuracy", &self.accuracy),
            ("balanced_accuracy", &self.balanced_accuracy),
            ("f_measure", &self.f_measure),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectSummary {
    pub subject: String,
    /// One entry per repetition.
    pub reps: Vec<RepMetrics>,
    /// Mean and spread over repetitions.
    pub metrics: MetricSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalitySummary {
    pub modality: EvalModality,
    pub subjects: Vec<SubjectSummary>,
    /// Per repetition, metrics averaged over subjects.
    pub reps: Vec<RepMetrics>,
    /// Mean and spread of the per-subject means; p over subjects.
    pub all: MetricSet,
    pub failed_predictions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionSummary {
    pub mean_weight: f64,
    pub mean_oracle_weight: f64,
    pub weight_rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub task: Task,
    pub scenario: Scenario,
    pub modality: EvalModality,
    pub reps: usize,
    pub seed: u64,
    pub class_names: [String; 2],
    pub subjects: Vec<String>,
    pub excluded: Vec<Exclusion>,
    pub examples: usize,
    /// Effective run configuration, filled in by the command layer.
    pub config: Option<serde_json::Value>,
    pub summaries: Vec<ModalitySummary>,
    pub fusion: Option<FusionSummary>,
    pub selection: Vec<SelectionReport>,
    pub leakage_violations: usize,
    pub trials: Vec<TrialRecord>,
}

impl EvaluationReport {
    pub fn summary(&self, m: EvalModality) -> Option<&ModalitySummary> {
        self.summaries.iter().find(|s| s.modality == m)
    }
}

fn rep_metrics(c: &ConfusionCounts) -> RepMetrics {
    RepMetrics {
        accuracy: accuracy(c),
        // Subjects are only evaluated when both classes are present.
        balanced_accuracy: balanced_accuracy(c).unwrap_or(f64::NAN),
        f_measure: symmetric_f_measure(c).unwrap_or(f64::NAN),
    }
}

fn modality_summary(
    m: EvalModality,
    subjects: &[String],
    reps: usize,
    trials: &[TrialRecord],
    chance: f64,
) -> ModalitySummary {
    let mut failed = 0;
    let mut summaries = Vec::new();
    for s in subjects {
        let mut per_rep = vec![ConfusionCounts::default(); reps];
        for t in trials.iter().filter(|t| &t.subject == s) {
            for (d, &truth) in t.decisions(m).iter().zip(&t.truth) {
                // A failed prediction counts as an error.
                let predicted = d.unwrap_or_else(|| {
                    failed += 1;
                    !truth
                });
                per_rep[t.rep].record(truth, predicted);
            }
        }
        let values: Vec<RepMetrics> = per_rep.iter().map(rep_metrics).collect();
        summaries.push(SubjectSummary {
            subject: s.clone(),
            metrics: MetricSet::of(&values, chance),
            reps: values,
        });
    }
    let rep_means = (0..reps)
        .map(|r| {
            let avg = |f: fn(&RepMetrics) -> f64| mean(&summaries.iter().map(|s| f(&s.reps[r])).collect::<Vec<_>>());
            RepMetrics {
                accuracy: avg(|m| m.accuracy),
                balanced_accuracy: avg(|m| m.balanced_accuracy),
                f_measure: avg(|m| m.f_measure),
            }
        })
        .collect();
    let subject_means: Vec<RepMetrics> = summaries
        .iter()
        .map(|s| RepMetrics {
            accuracy: s.metrics.accuracy.mean,
            balanced_accuracy: s.metrics.balanced_accuracy.mean,
            f_measure: s.metrics.f_measure.mean,
        })
        .collect();
    ModalitySummary {
        modality: m,
        all: MetricSet::of(&subject_means, chance),
        subjects: summaries,
        reps: rep_means,
        failed_predictions: failed,
    }
}

pub(super) fn summarize(
    cfg: &EvalConfig,
    labeled: &LabeledExamples,
    examples: usize,
    trials: Vec<TrialRecord>,
    leakage_violations: usize,
) -> Result<EvaluationReport> {
    let summaries = cfg
        .modality
        .reported()
        .iter()
        .map(|&m| modality_summary(m, &labeled.subjects, cfg.reps, &trials, cfg.chance))
        .collect();
    let mut selection = Vec::new();
    for &fm in cfg.modality.feature_modalities() {
        let logs: Vec<Vec<String>> = trials
            .iter()
            .filter_map(|t| match fm {
                FeatureModality::Eeg => t.eeg.as_ref(),
                FeatureModality::Peripheral => t.peri.as_ref(),
            })
            .map(|m| m.selected.clone())
            .collect();
        selection.push(selection_report(fm, &logs));
    }
    let fusion = if cfg.modality == EvalModality::Fusion {
        let fused: Vec<&FusionTrial> = trials.iter().filter_map(|t| t.fusion.as_ref()).collect();
        let w: Vec<f64> = fused.iter().map(|f| f.weight).collect();
        let o: Vec<f64> = fused.iter().map(|f| f.oracle_weight).collect();
        weight_rmse(&w, &o).ok().map(|rmse| FusionSummary {
            mean_weight: mean(&w),
            mean_oracle_weight: mean(&o),
            weight_rmse: rmse,
        })
    } else {
        None
    };
    let [a, b] = cfg.task.class_names();
    Ok(EvaluationReport {
        task: cfg.task,
        scenario: cfg.scenario,
        modality: cfg.modality,
        reps: cfg.reps,
        seed: cfg.seed,
        class_names: [a.to_string(), b.to_string()],
        subjects: labeled.subjects.clone(),
        excluded: labeled.excluded.clone(),
        examples,
        config: None,
        summaries,
        fusion,
        selection,
        leakage_violations,
        trials,
    })
}

fn fmt_p(p: Option<f64>) -> String {
    p.map_or_else(String::new, |v| v.to_string())
}

/// `subject,modality,metric,mean,std,p` with one ALL row per modality and metric.
pub fn write_summary_csv<W: Write>(out: W, report: &EvaluationReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subject", "modality", "metric", "mean", "std", "p"])?;
    for s in &report.summaries {
        let rows = s
            .subjects
            .iter()
            .map(|x| (x.subject.as_str(), &x.metrics))
            .chain(std::iter::once(("ALL", &s.all)));
        for (subject, metrics) in rows {
            for (name, m) in metrics.entries() {
                w.write_record([
                    subject.to_string(),
                    s.modality.as_str().to_string(),
                    name.to_string(),
                    m.mean.to_string(),
                    m.std.to_string(),
                    fmt_p(m.p),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Human-readable table of the ALL rows.
pub fn format_summary(report: &EvaluationReport) -> String {
    let mut s = format!(
        "task {} ({} vs {}), scenario {}, {} subject(s), {} rep(s)\n",
        report.task, report.class_names[0], report.class_names[1], report.scenario,
        report.subjects.len(), report.reps
    );
    s.push_str("modality  metric             mean    std     p\n");
    for m in &report.summaries {
        for (name, v) in m.all.entries() {
            s.push_str(&format!(
                "{:<9} {:<18} {:.4}  {:.4}  {}\n",
                m.modality.as_str(),
                name,
                v.mean,
                v.std,
                v.p.map_or_else(|| "-".to_string(), |p| format!("{p:.4}"))
            ));
        }
    }
    if let Some(f) = &report.fusion {
        s.push_str(&format!(
            "fusion weight mean {:.3}, oracle mean {:.3}, RMSE {:.3}\n",
            f.mean_weight, f.mean_oracle_weight, f.weight_rmse
        ));
    }
    for e in &report.excluded {
        s.push_str(&format!("excluded {}: {}\n", e.subject_id, e.reason));
    }
    s
}
