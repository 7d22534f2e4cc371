//! Multiclass metrics: confusion matrix, micro/macro F1 and per-category
//! precision/recall/F1.

use serde::{Deserialize, Serialize};

use super::LearnError;
use crate::model::Category;

const K: usize = Category::COUNT;

/// Raw confusion counts; rows are truth, columns are prediction.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new() -> ConfusionMatrix {
        ConfusionMatrix {
            counts: vec![vec![0; K]; K],
        }
    }

    pub fn from_pairs(truths: &[Category], preds: &[Category]) -> ConfusionMatrix {
        let mut cm = ConfusionMatrix::new();
        for (t, p) in truths.iter().zip(preds) {
            cm.counts[t.ordinal()][p.ordinal()] += 1;
        }
        cm
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for (row, orow) in self.counts.iter_mut().zip(&other.counts) {
            for (c, oc) in row.iter_mut().zip(orow) {
                *c += oc;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..K).map(|i| self.counts[i][i]).sum()
    }

    /// True per-category counts (row sums).
    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    /// Predicted per-category counts (column sums).
    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum()
    }

    /// Rows rescaled to sum to one; all-zero rows stay zero.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let sum: u64 = row.iter().sum();
                if sum == 0 {
                    vec![0.0; K]
                } else {
                    row.iter().map(|&c| c as f64 / sum as f64).collect()
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub category: Category,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub predicted: u64,
}

/// Metrics of one prediction/truth pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub per_category: Vec<CategoryMetrics>,
    pub confusion: ConfusionMatrix,
}

pub(crate) fn per_category_metrics(cm: &ConfusionMatrix) -> Vec<CategoryMetrics> {
    let mut out = Vec::with_capacity(K);
    for class in 0..K {
        let tp = cm.counts[class][class] as f64;
        let support = cm.support(class);
        let predicted = cm.predicted(class);
        let precision = if predicted > 0 {
            tp / predicted as f64
        } else {
            0.0
        };
        let recall = if support > 0 { tp / support as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        out.push(CategoryMetrics {
            category: Category::from_ordinal(class).unwrap(),
            precision,
            recall,
            f1,
            support,
            predicted,
        });
    }
    out
}

/// Macro-F1: unweighted mean of the per-class F1 over classes appearing in
/// the truth or the predictions. Classes predicted but absent from the truth
/// count with F1 = 0; classes absent from both are excluded.
pub(crate) fn macro_f1_of(per_category: &[CategoryMetrics]) -> f64 {
    let included: Vec<&CategoryMetrics> = per_category
        .iter()
        .filter(|m| m.support > 0 || m.predicted > 0)
        .collect();
    if included.is_empty() {
        return 0.0;
    }
    included.iter().map(|m| m.f1).sum::<f64>() / included.len() as f64
}

/// Micro and macro F1 plus the confusion matrix. For single-label multiclass
/// prediction the micro-F1 equals plain accuracy.
pub fn evaluate(preds: &[Category], truths: &[Category]) -> Result<FoldMetrics, LearnError> {
    if truths.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    if preds.len() != truths.len() {
        return Err(LearnError::LengthMismatch {
            what: "predictions",
            expected: truths.len(),
            got: preds.len(),
        });
    }
    let confusion = ConfusionMatrix::from_pairs(truths, preds);
    let micro_f1 = confusion.trace() as f64 / confusion.total() as f64;
    let per_category = per_category_metrics(&confusion);
    let macro_f1 = macro_f1_of(&per_category);
    Ok(FoldMetrics {
        micro_f1,
        macro_f1,
        per_category,
        confusion,
    })
}
