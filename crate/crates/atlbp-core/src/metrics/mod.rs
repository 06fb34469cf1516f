//! Evaluation: confusion matrices, per-class and mean F-scores, accuracy,
//! and the reference baselines.
//!
//! Convention: confusion rows index the ground truth, columns the
//! prediction. Per-class precision, recall, and F default to 0 when their
//! denominators are 0, and classes absent from both the truth and the
//! predictions are excluded from the mean F-score (an all-classes variant
//! is available for sensitivity analysis).

mod baseline;

pub use baseline::{
    predominant_label_baseline, train_mean_pool, MeanPoolParams, MeanPoolResult,
};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Count matrix with rows = truth, columns = predicted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(n_classes: usize) -> Result<Self> {
        if n_classes == 0 {
            return Err(Error::Usage("confusion matrix needs at least one class".into()));
        }
        Ok(Self {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        })
    }

    pub fn from_counts(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Usage("confusion matrix must be square and non-empty".into()));
        }
        Ok(Self {
            n_classes: n,
            counts: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n_classes + predicted]
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.n_classes + predicted] += 1;
    }

    pub fn add(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.n_classes != self.n_classes {
            return Err(Error::Usage(format!(
                "cannot pool confusion matrices of {} and {} classes",
                self.n_classes, other.n_classes
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(other.counts.iter()) {
            *a += b;
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        (0..self.n_classes).map(|j| self.get(truth, j)).sum()
    }

    pub fn col_sum(&self, predicted: usize) -> u64 {
        (0..self.n_classes).map(|i| self.get(i, predicted)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        (0..self.n_classes)
            .map(|i| (0..self.n_classes).map(|j| self.get(i, j)).collect())
            .collect()
    }
}

/// Builds the confusion matrix for equal-length truth/prediction sequences
/// with values in 0..n_classes.
pub fn confusion_matrix(truths: &[usize], predictions: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if truths.len() != predictions.len() {
        return Err(Error::Usage(format!(
            "got {} truths but {} predictions",
            truths.len(),
            predictions.len()
        )));
    }
    let mut cm = ConfusionMatrix::zeros(n_classes)?;
    for (&t, &p) in truths.iter().zip(predictions.iter()) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::Usage(format!(
                "label out of range: truth {t}, prediction {p}, classes {n_classes}"
            )));
        }
        cm.record(t, p);
    }
    Ok(cm)
}

/// Per-class F-scores and their mean. `included[c]` is false for classes
/// absent from both truth and predictions (their F is reported as 0 and
/// they do not enter the mean under the default exclusion rule).
#[derive(Clone, Debug, PartialEq)]
pub struct FScores {
    pub per_class: Vec<f64>,
    pub included: Vec<bool>,
    pub mean: f64,
}

/// Mean F-score under the default rule: classes with zero support in both
/// truth and predictions are excluded from the mean.
pub fn mean_f_score(cm: &ConfusionMatrix) -> FScores {
    mean_f_score_with(cm, false)
}

/// Mean F-score with the absent-class rule made explicit. With
/// `include_absent`, every class enters the mean (absent classes contribute
/// an F of 0).
pub fn mean_f_score_with(cm: &ConfusionMatrix, include_absent: bool) -> FScores {
    let n = cm.n_classes();
    let mut per_class = vec![0.0; n];
    let mut included = vec![false; n];
    let mut sum = 0.0;
    let mut count = 0usize;
    for c in 0..n {
        let tp = cm.get(c, c) as f64;
        let support = cm.row_sum(c);
        let predicted = cm.col_sum(c);
        let precision = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
        let recall = if support > 0 { tp / support as f64 } else { 0.0 };
        let f = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class[c] = f;
        let present = support > 0 || predicted > 0;
        included[c] = present || include_absent;
        if included[c] {
            sum += f;
            count += 1;
        }
    }
    let mean = if count > 0 { sum / count as f64 } else { 0.0 };
    FScores { per_class, included, mean }
}

/// trace / total.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Usage("accuracy is undefined on an empty confusion matrix".into()));
    }
    let trace: u64 = (0..cm.n_classes()).map(|c| cm.get(c, c)).sum();
    Ok(trace as f64 / total as f64)
}

/// Per-user slice of an evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserBreakdown {
    pub n_samples: u64,
    pub accuracy: f64,
    pub mean_f: f64,
}

/// Full evaluation report: confusion matrix, per-class F with class names,
/// mean F, accuracy, and a per-user breakdown.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Documents the matrix orientation for readers of the JSON artifact.
    pub confusion_orientation: String,
    pub class_names: Vec<String>,
    pub confusion: Vec<Vec<u64>>,
    pub per_class_f: Vec<f64>,
    /// Classes excluded from the mean (absent from both truth and
    /// predictions).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded_classes: Vec<String>,
    pub mean_f: f64,
    pub accuracy: f64,
    pub n_samples: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_user: BTreeMap<String, UserBreakdown>,
}

impl EvalReport {
    /// Builds a report from parallel truth/prediction/user sequences.
    pub fn from_predictions(
        truths: &[usize],
        predictions: &[usize],
        users: &[String],
        class_names: &[String],
    ) -> Result<Self> {
        if users.len() != truths.len() {
            return Err(Error::Usage(format!(
                "got {} truths but {} user ids",
                truths.len(),
                users.len()
            )));
        }
        let cm = confusion_matrix(truths, predictions, class_names.len())?;
        let mut per_user = BTreeMap::new();
        let mut by_user: BTreeMap<&String, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
        for ((t, p), u) in truths.iter().zip(predictions.iter()).zip(users.iter()) {
            let entry = by_user.entry(u).or_default();
            entry.0.push(*t);
            entry.1.push(*p);
        }
        for (user, (t, p)) in by_user {
            let ucm = confusion_matrix(&t, &p, class_names.len())?;
            per_user.insert(
                user.clone(),
                UserBreakdown {
                    n_samples: ucm.total(),
                    accuracy: accuracy(&ucm)?,
                    mean_f: mean_f_score(&ucm).mean,
                },
            );
        }
        Ok(Self::from_confusion(cm, class_names, per_user))
    }

    pub fn from_confusion(
        cm: ConfusionMatrix,
        class_names: &[String],
        per_user: BTreeMap<String, UserBreakdown>,
    ) -> Self {
        let scores = mean_f_score(&cm);
        let acc = accuracy(&cm).unwrap_or(0.0);
        let excluded = scores
            .included
            .iter()
            .enumerate()
            .filter(|(_, inc)| !**inc)
            .map(|(c, _)| class_names[c].clone())
            .collect();
        EvalReport {
            confusion_orientation: "rows=truth, cols=predicted".to_string(),
            class_names: class_names.to_vec(),
            confusion: cm.rows(),
            per_class_f: scores.per_class,
            excluded_classes: excluded,
            mean_f: scores.mean,
            accuracy: acc,
            n_samples: cm.total(),
            per_user,
        }
    }

    pub fn confusion_matrix(&self) -> Result<ConfusionMatrix> {
        ConfusionMatrix::from_counts(&self.confusion)
    }
}
