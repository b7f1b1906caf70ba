//! Fisher-criterion feature ranking and selection-frequency reporting.
//!
//! `J(f) = |mean_A - mean_B| / (var_A + var_B)` with unbiased variances.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Band, FeatureModality, EEG_ELECTRODES};
use crate::stats::{mean, sample_variance};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherScore {
    pub feature: String,
    /// `f64::INFINITY` when both variances are zero and the means differ.
    pub j: f64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub var_a: f64,
    pub var_b: f64,
}

pub fn fisher_score(feature: &str, values_a: &[f64], values_b: &[f64]) -> Result<FisherScore> {
    if values_a.len() < 2 || values_b.len() < 2 {
        return Err(Error::invalid(format!(
            "Fisher score of `{feature}` needs two samples per class, got {} and {}",
            values_a.len(),
            values_b.len()
        )));
    }
    let (mean_a, mean_b) = (mean(values_a), mean(values_b));
    let (var_a, var_b) = (sample_variance(values_a), sample_variance(values_b));
    let diff = (mean_a - mean_b).abs();
    let pooled = var_a + var_b;
    let j = if pooled > 0.0 {
        diff / pooled
    } else if diff > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(FisherScore {
        feature: feature.to_string(),
        j,
        mean_a,
        mean_b,
        var_a,
        var_b,
    })
}

/// Full ranking of a feature set on labelled training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    /// Scores in the input (canonical) feature order.
    pub scores: Vec<FisherScore>,
    /// Feature indices by descending J; ties keep canonical order.
    pub order: Vec<usize>,
}

impl Ranking {
    /// Indices of the `k` best features (all of them if `k` exceeds the count).
    pub fn top(&self, k: usize) -> &[usize] {
        &self.order[..k.min(self.order.len())]
    }

    pub fn top_names(&self, k: usize) -> Vec<String> {
        self.top(k)
            .iter()
            .map(|&i| self.scores[i].feature.clone())
            .collect()
    }
}

/// Rank every column of `rows` by Fisher J. `is_a[i]` gives the class of row `i`.
pub fn rank_features(names: &[String], rows: &[&[f64]], is_a: &[bool]) -> Result<Ranking> {
    if rows.len() != is_a.len() {
        return Err(Error::invalid("row and label counts differ"));
    }
    let n_a = is_a.iter().filter(|a| **a).count();
    if n_a == 0 || n_a == is_a.len() {
        return Err(Error::invalid("ranking needs training examples of both classes"));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != names.len()) {
        return Err(Error::invalid(format!(
            "row has {} values for {} feature names",
            r.len(),
            names.len()
        )));
    }
    let mut scores = Vec::with_capacity(names.len());
    let mut a = Vec::with_capacity(n_a);
    let mut b = Vec::with_capacity(is_a.len() - n_a);
    for (f, name) in names.iter().enumerate() {
        a.clear();
        b.clear();
        for (r, &class_a) in rows.iter().zip(is_a) {
            if class_a {
                a.push(r[f]);
            } else {
                b.push(r[f]);
            }
        }
        scores.push(fisher_score(name, &a, &b)?);
    }
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&x, &y| {
        scores[y]
            .j
            .partial_cmp(&scores[x].j)
            .unwrap_or(Ordering::Equal)
            .then(x.cmp(&y))
    });
    Ok(Ranking { scores, order })
}

/// The `k` highest-ranked feature names.
pub fn rank_and_select(
    names: &[String],
    rows: &[&[f64]],
    is_a: &[bool],
    k: usize,
) -> Result<Vec<String>> {
    if k == 0 || k > names.len() {
        return Err(Error::invalid(format!(
            "k = {k} must lie in 1..={}",
            names.len()
        )));
    }
    Ok(rank_features(names, rows, is_a)?.top_names(k))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureCount {
    pub feature: String,
    pub count: usize,
    /// Share of trials that selected the feature.
    pub frequency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupCount {
    pub group: String,
    pub count: usize,
    /// Share of all selections that fell in this group.
    pub frequency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub modality: FeatureModality,
    pub trials: usize,
    pub total_selections: usize,
    /// Canonical feature order.
    pub features: Vec<FeatureCount>,
    /// EEG bands or peripheral sensors.
    pub groups: Vec<GroupCount>,
    /// Per-electrode counts for topographic maps (EEG only).
    pub electrodes: Vec<GroupCount>,
}

impl SelectionReport {
    pub fn feature(&self, name: &str) -> Option<&FeatureCount> {
        self.features.iter().find(|f| f.feature == name)
    }

    pub fn group(&self, name: &str) -> Option<&GroupCount> {
        self.groups.iter().find(|g| g.group == name)
    }

    pub fn electrode(&self, name: &str) -> Option<&GroupCount> {
        self.electrodes.iter().find(|g| g.group == name)
    }
}

/// Group of a feature name: its band (EEG) or sensor prefix (peripheral).
fn group_of(modality: FeatureModality, name: &str) -> String {
    match modality {
        FeatureModality::Eeg => name.rsplit('_').next().unwrap_or(name).to_string(),
        FeatureModality::Peripheral => name.split('_').next().unwrap_or(name).to_string(),
    }
}

fn groups(counts: Vec<(String, usize)>, total: usize) -> Vec<GroupCount> {
    counts
        .into_iter()
        .map(|(group, count)| GroupCount {
            group,
            count,
            frequency: if total > 0 { count as f64 / total as f64 } else { 0.0 },
        })
        .collect()
}

/// Count how often each feature was selected over `trials` (one selected
/// name list per trial) and aggregate by band, sensor and electrode.
pub fn selection_report(modality: FeatureModality, trials: &[Vec<String>]) -> SelectionReport {
    let names = crate::model::feature_names(modality);
    let mut counts = vec![0usize; names.len()];
    for t in trials {
        for f in t {
            if let Some(i) = names.iter().position(|n| n == f) {
                counts[i] += 1;
            }
        }
    }
    let total: usize = counts.iter().sum();
    let features = names
        .iter()
        .zip(&counts)
        .map(|(n, c)| FeatureCount {
            feature: n.clone(),
            count: *c,
            frequency: if trials.is_empty() { 0.0 } else { *c as f64 / trials.len() as f64 },
        })
        .collect();

    let mut group_names: Vec<String> = match modality {
        FeatureModality::Eeg => Band::ALL.iter().map(|b| b.as_str().to_string()).collect(),
        FeatureModality::Peripheral => Vec::new(),
    };
    for n in names {
        let g = group_of(modality, n);
        if !group_names.contains(&g) {
            group_names.push(g);
        }
    }
    let group_counts = group_names
        .into_iter()
        .map(|g| {
            let c = names
                .iter()
                .zip(&counts)
                .filter(|(n, _)| group_of(modality, n) == g)
                .map(|(_, c)| c)
                .sum();
            (g, c)
        })
        .collect();

    let electrodes = match modality {
        FeatureModality::Eeg => groups(
            EEG_ELECTRODES
                .iter()
                .map(|e| {
                    let prefix = format!("{e}_");
                    let c = names
                        .iter()
                        .zip(&counts)
                        .filter(|(n, _)| n.starts_with(&prefix))
                        .map(|(_, c)| c)
                        .sum();
                    (e.to_string(), c)
                })
                .collect(),
            total,
        ),
        FeatureModality::Peripheral => Vec::new(),
    };

    SelectionReport {
        modality,
        trials: trials.len(),
        total_selections: total,
        features,
        groups: groups(group_counts, total),
        electrodes,
    }
}

/// `feature,count,frequency`
pub fn write_feature_counts<W: Write>(out: W, report: &SelectionReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["feature", "count", "frequency"])?;
    for f in &report.features {
        w.write_record([f.feature.clone(), f.count.to_string(), f.frequency.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `<band|sensor>,count,frequency`
pub fn write_group_summary<W: Write>(out: W, report: &SelectionReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let label = match report.modality {
        FeatureModality::Eeg => "band",
        FeatureModality::Peripheral => "sensor",
    };
    w.write_record([label, "count", "frequency"])?;
    for g in &report.groups {
        w.write_record([g.group.clone(), g.count.to_string(), g.frequency.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `electrode,count`
pub fn write_topography<W: Write>(out: W, report: &SelectionReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["electrode", "count"])?;
    for g in &report.electrodes {
        w.write_record([g.group.clone(), g.count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
