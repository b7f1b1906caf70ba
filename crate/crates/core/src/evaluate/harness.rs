//! Outer cross-validation loops. Every (subject, trial, repetition) job is
//! independent and seeded from its coordinates, so jobs run in parallel
//! without affecting results.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::labels::{derive_labels, Task, TaskSpec};
use super::report::{summarize, EvaluationReport, FusionTrial, ModalityTrial, TrialRecord};
use crate::classify::{grid_search, loo_posteriors, train_mlp, ClassifierPosterior, TrainConfig};
use crate::error::{Error, Result};
use crate::features::SegmentFeatures;
use crate::fusion::{default_weight_grid, fuse, grid_search_weight, oracle_weight};
use crate::model::{feature_names, FeatureModality, RatingRecord};
use crate::par::Execution;
use crate::seed::{derive_seed, hash_str};
use crate::selection::rank_features;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Leave one segment out within each subject.
    Dep,
    /// Leave one subject out.
    Indep,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Dep => "dep",
            Scenario::Indep => "indep",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dep" | "dependent" | "subject-dependent" => Ok(Scenario::Dep),
            "indep" | "independent" | "subject-independent" => Ok(Scenario::Indep),
            other => Err(Error::invalid(format!("unknown scenario `{other}` (dep, indep)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalModality {
    Eeg,
    Peri,
    Fusion,
}

impl EvalModality {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalModality::Eeg => "eeg",
            EvalModality::Peri => "peri",
            EvalModality::Fusion => "fusion",
        }
    }

    /// Feature sets a run of this modality trains on.
    pub fn feature_modalities(self) -> &'static [FeatureModality] {
        match self {
            EvalModality::Eeg => &[FeatureModality::Eeg],
            EvalModality::Peri => &[FeatureModality::Peripheral],
            EvalModality::Fusion => &[FeatureModality::Eeg, FeatureModality::Peripheral],
        }
    }

    /// Modalities whose results a run reports.
    pub fn reported(self) -> &'static [EvalModality] {
        match self {
            EvalModality::Eeg => &[EvalModality::Eeg],
            EvalModality::Peri => &[EvalModality::Peri],
            EvalModality::Fusion => &[EvalModality::Eeg, EvalModality::Peri, EvalModality::Fusion],
        }
    }
}

impl fmt::Display for EvalModality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EvalModality {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "eeg" => Ok(EvalModality::Eeg),
            "peri" | "peripheral" => Ok(EvalModality::Peri),
            "fusion" => Ok(EvalModality::Fusion),
            other => Err(Error::invalid(format!("unknown modality `{other}` (eeg, peri, fusion)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub task: Task,
    pub scenario: Scenario,
    pub modality: EvalModality,
    pub reps: usize,
    pub seed: u64,
    pub train: TrainConfig,
    pub k_grid_eeg: Vec<usize>,
    pub k_grid_peri: Vec<usize>,
    pub weight_grid: Vec<f64>,
    pub excluded_subjects: Vec<String>,
    pub chance: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            task: Task::HdrVsLdr,
            scenario: Scenario::Dep,
            modality: EvalModality::Eeg,
            reps: 10,
            seed: 1,
            train: TrainConfig::default(),
            k_grid_eeg: vec![5, 10, 20, 40],
            k_grid_peri: vec![3, 5, 8, 13],
            weight_grid: default_weight_grid(),
            excluded_subjects: Vec::new(),
            chance: 0.5,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.reps == 0 {
            return Err(Error::invalid("reps must be at least 1"));
        }
        if self.k_grid_eeg.is_empty() || self.k_grid_peri.is_empty() || self.k_grid_eeg.contains(&0) || self.k_grid_peri.contains(&0) {
            return Err(Error::invalid("feature-count grids must be non-empty and positive"));
        }
        if self.weight_grid.is_empty() || self.weight_grid.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::invalid("fusion weights must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.chance) {
            return Err(Error::invalid("chance level must lie in [0, 1)"));
        }
        Ok(())
    }

    fn k_grid(&self, m: FeatureModality) -> &[usize] {
        match m {
            FeatureModality::Eeg => &self.k_grid_eeg,
            FeatureModality::Peripheral => &self.k_grid_peri,
        }
    }
}

fn modality_tag(m: FeatureModality) -> u64 {
    match m {
        FeatureModality::Eeg => 1,
        FeatureModality::Peripheral => 2,
    }
}

/// Initialization seed of one model fit. Depends only on the trial
/// coordinates and the feature set, never on the run's modality.
pub fn trial_seed(base: u64, subject: &str, trial: usize, rep: usize, m: FeatureModality) -> u64 {
    derive_seed(base, &[hash_str(subject), trial as u64, rep as u64, modality_tag(m)])
}

/// Which labelled examples a trial read while fitting and while testing.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrialAudit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub fit_reads: BTreeSet<usize>,
    pub test_reads: BTreeSet<usize>,
    /// Stored standardization means equal the training-split means.
    pub standardization_from_train: bool,
}

impl TrialAudit {
    pub fn is_clean(&self) -> bool {
        let train: BTreeSet<usize> = self.train.iter().copied().collect();
        self.fit_reads.is_subset(&train)
            && self.test.iter().all(|t| !self.fit_reads.contains(t))
            && self.standardization_from_train
    }
}

/// Row access that records what the fitting and prediction stages read.
struct Access<'a> {
    rows: &'a [Vec<f64>],
    fit: RefCell<BTreeSet<usize>>,
    test: RefCell<BTreeSet<usize>>,
}

impl<'a> Access<'a> {
    fn fit_row(&self, i: usize) -> &'a [f64] {
        self.fit.borrow_mut().insert(i);
        &self.rows[i]
    }

    fn test_row(&self, i: usize) -> &'a [f64] {
        self.test.borrow_mut().insert(i);
        &self.rows[i]
    }
}

struct Fit {
    trial: ModalityTrial,
    posteriors: Vec<ClassifierPosterior>,
    loo: Option<Vec<Option<ClassifierPosterior>>>,
}

#[allow(clippy::too_many_arguments)]
fn fit_modality(
    access: &Access<'_>,
    names: &[String],
    is_a: &[bool],
    train: &[usize],
    test: &[usize],
    k_grid: &[usize],
    cfg: &TrainConfig,
    need_loo: bool,
) -> Result<(Fit, bool)> {
    let rows: Vec<&[f64]> = train.iter().map(|&i| access.fit_row(i)).collect();
    let labels: Vec<bool> = train.iter().map(|&i| is_a[i]).collect();
    let ranking = rank_features(names, &rows, &labels)?;
    let grid = grid_search(&rows, &labels, names, &ranking, k_grid, cfg, Execution::Sequential)?;
    let features = ranking.top(grid.k);
    let project = |r: &[f64]| features.iter().map(|&f| r[f]).collect::<Vec<f64>>();
    let projected: Vec<Vec<f64>> = rows.iter().map(|r| project(r)).collect();
    let proj_refs: Vec<&[f64]> = projected.iter().map(Vec::as_slice).collect();
    let selected = ranking.top_names(grid.k);
    let model = train_mlp(&proj_refs, &labels, &selected, grid.hidden_n, cfg)?;
    let reference = crate::classify::Standardizer::fit(&proj_refs);
    let standardization_ok = reference.mean == model.standardizer.mean;
    let posteriors = test
        .iter()
        .map(|&i| model.predict(&project(access.test_row(i))))
        .collect::<Result<Vec<_>>>()?;
    let loo = match grid.loo_posteriors {
        Some(p) => Some(p),
        None if need_loo => Some(loo_posteriors(
            &proj_refs,
            &labels,
            &selected,
            &(0..selected.len()).collect::<Vec<_>>(),
            grid.hidden_n,
            cfg,
            Execution::Sequential,
        )),
        None => None,
    };
    let inner_accuracy = grid
        .points
        .iter()
        .find(|p| p.hidden_n == grid.hidden_n && p.k == grid.k)
        .map(|p| p.loo_accuracy);
    Ok((
        Fit {
            trial: ModalityTrial {
                hidden_n: grid.hidden_n,
                k: grid.k,
                inner_accuracy,
                selected,
                posteriors: posteriors.clone(),
            },
            posteriors,
            loo,
        },
        standardization_ok,
    ))
}

struct Prepared<'a> {
    cfg: &'a EvalConfig,
    is_a: Vec<bool>,
    refs: Vec<String>,
    /// Per feature modality: rows aligned with `is_a`.
    rows: Vec<(FeatureModality, Vec<Vec<f64>>)>,
}

#[derive(Clone, Debug)]
struct Job {
    subject: String,
    trial: usize,
    rep: usize,
    train: Vec<usize>,
    test: Vec<usize>,
}

fn run_job(p: &Prepared<'_>, job: &Job) -> (TrialRecord, TrialAudit) {
    let cfg = p.cfg;
    let fusion = cfg.modality == EvalModality::Fusion;
    let mut record = TrialRecord {
        subject: job.subject.clone(),
        trial: job.trial,
        rep: job.rep,
        test: job.test.iter().map(|&i| p.refs[i].clone()).collect(),
        truth: job.test.iter().map(|&i| p.is_a[i]).collect(),
        eeg: None,
        peri: None,
        fusion: None,
        errors: Vec::new(),
    };
    let mut audit = TrialAudit {
        train: job.train.clone(),
        test: job.test.clone(),
        standardization_from_train: true,
        ..TrialAudit::default()
    };
    let mut fits: Vec<(FeatureModality, Fit)> = Vec::new();
    for (m, rows) in &p.rows {
        let access = Access { rows, fit: RefCell::default(), test: RefCell::default() };
        let seed = trial_seed(cfg.seed, &job.subject, job.trial, job.rep, *m);
        let result = fit_modality(
            &access,
            feature_names(*m),
            &p.is_a,
            &job.train,
            &job.test,
            cfg.k_grid(*m),
            &cfg.train.with_seed(seed),
            fusion,
        );
        audit.fit_reads.extend(access.fit.into_inner());
        audit.test_reads.extend(access.test.into_inner());
        match result {
            Ok((fit, std_ok)) => {
                audit.standardization_from_train &= std_ok;
                fits.push((*m, fit));
            }
            Err(e) => {
                let msg = format!("{} trial {} rep {} ({m:?}): {e}", job.subject, job.trial, job.rep);
                log::warn!("{msg}");
                record.errors.push(msg);
            }
        }
    }
    if fusion {
        let eeg = fits.iter().find(|(m, _)| *m == FeatureModality::Eeg).map(|(_, f)| f);
        let peri = fits.iter().find(|(m, _)| *m == FeatureModality::Peripheral).map(|(_, f)| f);
        if let (Some(e), Some(q)) = (eeg, peri) {
            let labels: Vec<bool> = job.train.iter().map(|&i| p.is_a[i]).collect();
            let outcome = (|| -> Result<FusionTrial> {
                let le = e.loo.as_deref().ok_or_else(|| Error::invalid("missing EEG fold posteriors"))?;
                let lq = q.loo.as_deref().ok_or_else(|| Error::invalid("missing peripheral fold posteriors"))?;
                let w = grid_search_weight(le, lq, &labels, &cfg.weight_grid)?;
                let decisions = e
                    .posteriors
                    .iter()
                    .zip(&q.posteriors)
                    .map(|(a, b)| fuse(a, b, w).map(|d| d.is_a))
                    .collect::<Result<Vec<bool>>>()?;
                let oracle = oracle_weight(&e.posteriors, &q.posteriors, &record.truth, &cfg.weight_grid)?;
                Ok(FusionTrial { weight: w, oracle_weight: oracle, decisions })
            })();
            match outcome {
                Ok(f) => record.fusion = Some(f),
                Err(err) => record.errors.push(format!("fusion: {err}")),
            }
        }
    }
    for (m, fit) in fits {
        match m {
            FeatureModality::Eeg => record.eeg = Some(fit.trial),
            FeatureModality::Peripheral => record.peri = Some(fit.trial),
        }
    }
    (record, audit)
}

/// Full evaluation with per-trial leakage audits.
pub fn evaluate_with_audit(
    features: &[SegmentFeatures],
    ratings: &[RatingRecord],
    cfg: &EvalConfig,
    exec: Execution,
) -> Result<(EvaluationReport, Vec<TrialAudit>)> {
    cfg.validate()?;
    let spec = TaskSpec {
        excluded_subjects: cfg.excluded_subjects.clone(),
        ..TaskSpec::new(cfg.task)
    };
    let labeled = derive_labels(features, ratings, &spec)?;
    let mut rows = Vec::new();
    for &m in cfg.modality.feature_modalities() {
        let r = labeled
            .indices
            .iter()
            .map(|&i| {
                features[i].get(m).map(|v| v.values().to_vec()).ok_or_else(|| {
                    Error::MissingChannel(format!("no {m:?} features for segment {}", features[i].segment))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((m, r));
    }
    let prepared = Prepared {
        cfg,
        is_a: labeled.is_a.clone(),
        refs: labeled.indices.iter().map(|&i| features[i].segment.to_string()).collect(),
        rows,
    };
    let subject_of: Vec<&str> = labeled.indices.iter().map(|&i| features[i].segment.subject_id.as_str()).collect();
    let positions = |s: &str| -> Vec<usize> { (0..subject_of.len()).filter(|&j| subject_of[j] == s).collect() };

    let mut jobs = Vec::new();
    match cfg.scenario {
        Scenario::Dep => {
            for s in &labeled.subjects {
                let pos = positions(s);
                if pos.len() < 2 {
                    return Err(Error::invalid(format!("subject {s} has fewer than 2 segments")));
                }
                for rep in 0..cfg.reps {
                    for (t, &held) in pos.iter().enumerate() {
                        jobs.push(Job {
                            subject: s.clone(),
                            trial: t,
                            rep,
                            train: pos.iter().copied().filter(|&j| j != held).collect(),
                            test: vec![held],
                        });
                    }
                }
            }
        }
        Scenario::Indep => {
            if labeled.subjects.len() < 2 {
                return Err(Error::invalid(format!(
                    "subject-independent evaluation needs at least 2 subjects, got {}",
                    labeled.subjects.len()
                )));
            }
            for s in &labeled.subjects {
                let test = positions(s);
                let train: Vec<usize> = (0..subject_of.len()).filter(|&j| subject_of[j] != s.as_str()).collect();
                for rep in 0..cfg.reps {
                    jobs.push(Job { subject: s.clone(), trial: 0, rep, train: train.clone(), test: test.clone() });
                }
            }
        }
    }
    log::info!(
        "evaluating {} jobs ({} {} {}, {} reps)",
        jobs.len(),
        cfg.task,
        cfg.scenario,
        cfg.modality,
        cfg.reps
    );
    let results = exec.map(jobs, |job| run_job(&prepared, &job));
    let (trials, audits): (Vec<TrialRecord>, Vec<TrialAudit>) = results.into_iter().unzip();
    let violations = audits.iter().filter(|a| !a.is_clean()).count();
    let report = summarize(cfg, &labeled, prepared.is_a.len(), trials, violations)?;
    Ok((report, audits))
}

pub fn evaluate(
    features: &[SegmentFeatures],
    ratings: &[RatingRecord],
    cfg: &EvalConfig,
    exec: Execution,
) -> Result<EvaluationReport> {
    evaluate_with_audit(features, ratings, cfg, exec).map(|(r, _)| r)
}

pub fn run_subject_dependent(
    features: &[SegmentFeatures],
    ratings: &[RatingRecord],
    cfg: &EvalConfig,
    exec: Execution,
) -> Result<EvaluationReport> {
    evaluate(features, ratings, &EvalConfig { scenario: Scenario::Dep, ..cfg.clone() }, exec)
}

pub fn run_subject_independent(
    features: &[SegmentFeatures],
    ratings: &[RatingRecord],
    cfg: &EvalConfig,
    exec: Execution,
) -> Result<EvaluationReport> {
    evaluate(features, ratings, &EvalConfig { scenario: Scenario::Indep, ..cfg.clone() }, exec)
}
