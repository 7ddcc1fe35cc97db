//! Prediction and classification metrics.

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::net::Net;
use super::{ModelError, NUM_CLASSES};
use crate::sim::profile::ImpairmentLevel;

/// Argmax; exact ties go to the lower-severity class.
pub fn argmax_low_tie(p: &[f64; NUM_CLASSES]) -> usize {
    let mut best = 0;
    for k in 1..NUM_CLASSES {
        if p[k] > p[best] {
            best = k;
        }
    }
    best
}

pub fn predict(net: &Net, left: &[f64], right: &[f64]) -> Result<ImpairmentLevel, ModelError> {
    let p = net.forward(left, right)?;
    Ok(ImpairmentLevel::from_index(argmax_low_tie(&p)).expect("class index"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// no test sample was predicted as this class (precision set to 0)
    pub never_predicted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// rows = true class, columns = predicted class
    pub confusion: [[usize; NUM_CLASSES]; NUM_CLASSES],
    pub weighted_accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

impl EvalReport {
    pub fn from_confusion(confusion: [[usize; NUM_CLASSES]; NUM_CLASSES]) -> Result<Self, ModelError> {
        let total: usize = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(ModelError::Dataset("empty test set".into()));
        }
        let mut per_class = Vec::with_capacity(NUM_CLASSES);
        let mut weighted_accuracy = 0.0;
        for c in 0..NUM_CLASSES {
            let support: usize = confusion[c].iter().sum();
            let predicted: usize = (0..NUM_CLASSES).map(|r| confusion[r][c]).sum();
            let tp = confusion[c][c] as f64;
            let recall = if support > 0 { tp / support as f64 } else { 0.0 };
            let precision = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            weighted_accuracy += recall * support as f64 / total as f64;
            per_class.push(ClassMetrics {
                precision,
                recall,
                f1,
                support,
                never_predicted: predicted == 0,
            });
        }
        let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / NUM_CLASSES as f64;
        Ok(Self {
            confusion,
            weighted_accuracy,
            macro_precision: mean(|m| m.precision),
            macro_recall: mean(|m| m.recall),
            macro_f1: mean(|m| m.f1),
            per_class,
        })
    }

    /// Recompute all metrics from the stored confusion matrix.
    pub fn recomputed(&self) -> Result<Self, ModelError> {
        Self::from_confusion(self.confusion)
    }
}

pub fn evaluate_indices(net: &Net, data: &Dataset, idx: &[usize]) -> Result<EvalReport, ModelError> {
    let mut confusion = [[0usize; NUM_CLASSES]; NUM_CLASSES];
    for &i in idx {
        let it = &data.items[i];
        let p = predict(net, &it.left, &it.right)?;
        confusion[it.label.index()][p.index()] += 1;
    }
    EvalReport::from_confusion(confusion)
}

/// Metrics on the held-out split.
pub fn evaluate(net: &Net, data: &Dataset) -> Result<EvalReport, ModelError> {
    evaluate_indices(net, data, &data.test)
}
