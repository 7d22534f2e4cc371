//! Stratified cross-validation driver and the evaluation report it emits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{per_category_metrics, ConfusionMatrix};
use super::{
    derive_seed, evaluate, feature_importance, predict, sample_weights, stratified_kfold, train,
    Dataset, LearnConfig, LearnError, ModelKind, STREAM_FOLD_TRAIN,
};
use crate::model::{BASIC_RANGE, EXTRA_RANGE, FEATURE_COUNT, MOMENT_RANGE};

/// Which of the three feature blocks participate in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureMask {
    pub basic: bool,
    pub extra: bool,
    pub moments: bool,
}

impl FeatureMask {
    pub const ALL: FeatureMask = FeatureMask {
        basic: true,
        extra: true,
        moments: true,
    };

    pub fn is_all(&self) -> bool {
        self.basic && self.extra && self.moments
    }

    /// Column indices in the canonical 64-feature layout.
    pub fn indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        if self.basic {
            out.extend(BASIC_RANGE);
        }
        if self.extra {
            out.extend(EXTRA_RANGE);
        }
        if self.moments {
            out.extend(MOMENT_RANGE);
        }
        out
    }
}

impl std::fmt::Display for FeatureMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_all() {
            return f.write_str("all");
        }
        let mut parts = Vec::new();
        if self.basic {
            parts.push("basic");
        }
        if self.extra {
            parts.push("extra");
        }
        if self.moments {
            parts.push("moments");
        }
        if parts.is_empty() {
            parts.push("none");
        }
        f.write_str(&parts.join("+"))
    }
}

impl std::str::FromStr for FeatureMask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            return Ok(FeatureMask::ALL);
        }
        let mut mask = FeatureMask {
            basic: false,
            extra: false,
            moments: false,
        };
        for part in s.split(['+', ',']) {
            match part.trim() {
                "basic" => mask.basic = true,
                "extra" => mask.extra = true,
                "moments" => mask.moments = true,
                other => return Err(format!("unknown feature block {other:?}")),
            }
        }
        Ok(mask)
    }
}

impl Serialize for FeatureMask {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for FeatureMask {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub micro_f1: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub category: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature: String,
    pub score: f64,
}

/// Aggregated cross-validation results. Serialization is deterministic:
/// identical inputs and seed produce byte-identical JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub version: u32,
    pub model: ModelKind,
    pub k: usize,
    pub seed: u64,
    pub weighted: bool,
    pub feature_mask: String,
    pub config_hash: String,
    pub n_samples: usize,
    pub feature_names: Vec<String>,
    pub folds: Vec<FoldSummary>,
    pub mean_micro_f1: f64,
    pub mean_macro_f1: f64,
    pub confusion_raw: Vec<Vec<u64>>,
    pub confusion_normalized: Vec<Vec<f64>>,
    pub per_category: Vec<CategoryReport>,
    pub importances: Option<Vec<ImportanceEntry>>,
    pub flags: Vec<String>,
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<EvaluationReport, LearnError> {
        serde_json::from_str(s).map_err(|e| LearnError::BadModelFile(e.to_string()))
    }
}

pub const REPORT_FORMAT_VERSION: u32 = 1;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

struct FoldOutcome {
    micro_f1: f64,
    macro_f1: f64,
    confusion: ConfusionMatrix,
    importance: Option<Vec<(String, f64)>>,
    degenerate: bool,
}

/// Runs k-fold cross-validation: stratified folds, per-fold cost-sensitive
/// weights computed on the training split, one model per fold (trained in
/// parallel, aggregated in fold order), summed confusion and averaged
/// importances. `mask` restricts training to feature blocks and requires the
/// canonical 64-column layout when it is not `all`.
pub fn cross_validate(
    dataset: &Dataset,
    kind: ModelKind,
    config: &LearnConfig,
    k: usize,
    seed: u64,
    mask: FeatureMask,
    weighted: bool,
) -> Result<EvaluationReport, LearnError> {
    let masked;
    let data = if mask.is_all() {
        dataset
    } else {
        if dataset.features.n_cols() != FEATURE_COUNT {
            return Err(LearnError::MaskNeedsCanonicalLayout(
                dataset.features.n_cols(),
            ));
        }
        let indices = mask.indices();
        if indices.is_empty() {
            return Err(LearnError::EmptyMask);
        }
        masked = dataset.select_columns(&indices);
        &masked
    };

    let plan = stratified_kfold(&data.labels, k, seed)?;
    let outcomes: Vec<Result<FoldOutcome, LearnError>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train_rows = plan.train_indices(f);
            let test_rows = &plan.folds[f];
            let mut train_ds = data.select_rows(&train_rows);
            train_ds.weights = if weighted {
                Some(sample_weights(&train_ds.labels)?)
            } else {
                None
            };
            let fold_seed = derive_seed(seed, STREAM_FOLD_TRAIN, f as u64);
            let model = train(kind, &train_ds, config, fold_seed)?;
            let test_x = data.features.select_rows(test_rows);
            let truths: Vec<_> = test_rows.iter().map(|&i| data.labels[i]).collect();
            let preds = predict(&model, &test_x)?;
            let metrics = evaluate(&preds, &truths)?;
            let importance = if kind.is_tree_family() {
                Some(feature_importance(&model)?)
            } else {
                None
            };
            Ok(FoldOutcome {
                micro_f1: metrics.micro_f1,
                macro_f1: metrics.macro_f1,
                confusion: metrics.confusion,
                importance,
                degenerate: model.degenerate,
            })
        })
        .collect();

    let mut folds = Vec::with_capacity(k);
    let mut confusion = ConfusionMatrix::new();
    let mut flags = Vec::new();
    let mut importance_sums: Option<Vec<f64>> = None;
    let mut micro_sum = 0.0;
    let mut macro_sum = 0.0;
    for (f, outcome) in outcomes.into_iter().enumerate() {
        let outcome = outcome?;
        micro_sum += outcome.micro_f1;
        macro_sum += outcome.macro_f1;
        folds.push(FoldSummary {
            fold: f,
            micro_f1: outcome.micro_f1,
            macro_f1: outcome.macro_f1,
        });
        confusion.add(&outcome.confusion);
        if outcome.degenerate {
            flags.push(format!("fold {f}: degenerate single-category training set"));
        }
        if let Some(ranked) = outcome.importance {
            let sums = importance_sums
                .get_or_insert_with(|| vec![0.0; data.feature_names.len()]);
            for (name, score) in ranked {
                let idx = data
                    .feature_names
                    .iter()
                    .position(|n| *n == name)
                    .expect("importance name from the same dataset");
                sums[idx] += score;
            }
        }
    }

    let per_cat = per_category_metrics(&confusion);
    let importances = importance_sums.map(|sums| {
        let mut order: Vec<usize> = (0..sums.len()).collect();
        order.sort_by(|&a, &b| {
            sums[b]
                .partial_cmp(&sums[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        order
            .into_iter()
            .map(|i| ImportanceEntry {
                feature: data.feature_names[i].clone(),
                score: sums[i] / k as f64,
            })
            .collect::<Vec<_>>()
    });

    let mask_string = mask.to_string();
    let hash_input = serde_json::to_string(&(
        kind,
        config,
        k,
        seed,
        &mask_string,
        weighted,
        data.feature_names.len(),
    ))
    .expect("hash input serialization cannot fail");
    let config_hash = format!("{:016x}", fnv1a(hash_input.as_bytes()));

    Ok(EvaluationReport {
        version: REPORT_FORMAT_VERSION,
        model: kind,
        k,
        seed,
        weighted,
        feature_mask: mask_string,
        config_hash,
        n_samples: data.len(),
        feature_names: data.feature_names.clone(),
        folds,
        mean_micro_f1: micro_sum / k as f64,
        mean_macro_f1: macro_sum / k as f64,
        confusion_raw: confusion.counts.clone(),
        confusion_normalized: confusion.normalized(),
        per_category: per_cat
            .into_iter()
            .map(|m| CategoryReport {
                category: m.category.name().to_string(),
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
                support: m.support,
            })
            .collect(),
        importances,
        flags,
    })
}
