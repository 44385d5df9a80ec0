//! Precision, recall and F1, overall and per group.
//!
//! Every `0/0` ratio is reported as 0. For two-class problems the positive
//! class is id 1 (health mention); with more classes scores are macro
//! averages over labels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const POSITIVE_CLASS: usize = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    /// One-vs-rest counts for `positive`.
    pub fn from_predictions(predictions: &[usize], labels: &[usize], positive: usize) -> Self {
        assert_eq!(
            predictions.len(),
            labels.len(),
            "prediction/label length mismatch"
        );
        let mut c = Self::default();
        for (&p, &y) in predictions.iter().zip(labels) {
            match (p == positive, y == positive) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn f1_from(precision: f64, recall: f64) -> f64 {
    ratio(2.0 * precision * recall, precision + recall)
}

pub fn precision_recall_f1(c: &ConfusionCounts) -> Prf {
    let precision = ratio(c.tp as f64, (c.tp + c.fp) as f64);
    let recall = ratio(c.tp as f64, (c.tp + c.fn_) as f64);
    Prf {
        precision,
        recall,
        f1: f1_from(precision, recall),
    }
}

/// Unweighted mean of per-label precision, recall and F1.
pub fn macro_prf(predictions: &[usize], labels: &[usize], n_classes: usize) -> Prf {
    let per: Vec<Prf> = (0..n_classes)
        .map(|k| precision_recall_f1(&ConfusionCounts::from_predictions(predictions, labels, k)))
        .collect();
    mean_prf(&per)
}

pub fn mean_prf(items: &[Prf]) -> Prf {
    if items.is_empty() {
        return Prf::default();
    }
    let n = items.len() as f64;
    Prf {
        precision: items.iter().map(|p| p.precision).sum::<f64>() / n,
        recall: items.iter().map(|p| p.recall).sum::<f64>() / n,
        f1: items.iter().map(|p| p.f1).sum::<f64>() / n,
    }
}

/// Headline score: positive-class metrics for two classes, label macro
/// average otherwise.
pub fn score(predictions: &[usize], labels: &[usize], n_classes: usize) -> Prf {
    if n_classes == 2 {
        precision_recall_f1(&ConfusionCounts::from_predictions(
            predictions,
            labels,
            POSITIVE_CLASS,
        ))
    } else {
        macro_prf(predictions, labels, n_classes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub group: String,
    pub support: usize,
    pub scores: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClasswiseF1 {
    /// Groups in name order.
    pub groups: Vec<GroupScore>,
    /// Unweighted mean of the group F1 scores.
    pub macro_f1: f64,
    /// Per-label F1 over all examples, indexed by class id.
    pub label_f1: Vec<f64>,
    pub label_macro_f1: f64,
    /// Expected groups that had no examples.
    pub excluded: Vec<String>,
}

/// F1 within each group (e.g. disease category) and its macro average,
/// alongside the per-label macro F1.
pub fn classwise_average_f1<G: AsRef<str>>(
    predictions: &[usize],
    labels: &[usize],
    groups: &[G],
    expected_groups: &[&str],
    n_classes: usize,
) -> ClasswiseF1 {
    assert_eq!(
        predictions.len(),
        groups.len(),
        "prediction/group length mismatch"
    );
    let mut by_group: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for ((&p, &y), g) in predictions.iter().zip(labels).zip(groups) {
        let entry = by_group.entry(g.as_ref()).or_default();
        entry.0.push(p);
        entry.1.push(y);
    }
    let mut excluded: Vec<String> = expected_groups
        .iter()
        .filter(|g| !by_group.contains_key(*g))
        .map(|g| g.to_string())
        .collect();
    excluded.sort();
    for g in &excluded {
        log::warn!("group {g} has no examples; excluded from the class-wise average");
    }
    let groups: Vec<GroupScore> = by_group
        .into_iter()
        .map(|(g, (p, y))| GroupScore {
            group: g.to_string(),
            support: p.len(),
            scores: score(&p, &y, n_classes),
        })
        .collect();
    let macro_f1 = if groups.is_empty() {
        0.0
    } else {
        groups.iter().map(|g| g.scores.f1).sum::<f64>() / groups.len() as f64
    };
    let label_f1: Vec<f64> = (0..n_classes)
        .map(|k| precision_recall_f1(&ConfusionCounts::from_predictions(predictions, labels, k)).f1)
        .collect();
    let label_macro_f1 = if n_classes == 0 {
        0.0
    } else {
        label_f1.iter().sum::<f64>() / n_classes as f64
    };
    ClasswiseF1 {
        groups,
        macro_f1,
        label_f1,
        label_macro_f1,
        excluded,
    }
}
