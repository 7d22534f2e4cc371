//! Self-contained supervised learning and evaluation: cost-sensitive sample
//! weights, max-abs normalization, stratified k-fold plans, five classifiers,
//! multiclass metrics and information-gain feature importance.

pub mod cv;
pub mod forest;
pub mod gbt;
pub mod linear;
pub mod metrics;
pub mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Category;

pub use cv::{cross_validate, CategoryReport, EvaluationReport, FoldSummary, ImportanceEntry};
pub use metrics::{evaluate, ConfusionMatrix, FoldMetrics};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("{what}: expected {expected} entries, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("non-positive sample weight at row {row}")]
    NonPositiveWeight { row: usize },
    #[error("fold count {k} invalid for {n} samples")]
    BadFoldCount { k: usize, n: usize },
    #[error("model expects {expected} feature columns, got {got}")]
    ColumnMismatch { expected: usize, got: usize },
    #[error("feature importance is not defined for {0} models")]
    ImportanceUnsupported(ModelKind),
    #[error("feature mask selects no columns")]
    EmptyMask,
    #[error("feature masks apply to the canonical 64-column layout, got {0} columns")]
    MaskNeedsCanonicalLayout(usize),
    #[error("unknown model kind {0:?}")]
    UnknownModelKind(String),
    #[error("model file: {0}")]
    BadModelFile(String),
}

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Matrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Matrix, LearnError> {
        let n = rows.len();
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        let mut data = Vec::with_capacity(n * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(LearnError::LengthMismatch {
                    what: "matrix row",
                    expected: cols,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(LearnError::NonFinite { row: i, col: j });
                }
                data.push(v);
            }
        }
        Ok(Matrix { data, rows: n, cols })
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            data,
            rows: rows.len(),
            cols: self.cols,
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for i in 0..self.rows {
            let row = self.row(i);
            for &c in cols {
                data.push(row[c]);
            }
        }
        Matrix {
            data,
            rows: self.rows,
            cols: cols.len(),
        }
    }
}

/// Feature matrix plus aligned labels, subject ids and optional weights.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub subjects: Vec<String>,
    pub features: Matrix,
    pub labels: Vec<Category>,
    pub weights: Option<Vec<f64>>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        subjects: Vec<String>,
        features: Matrix,
        labels: Vec<Category>,
        weights: Option<Vec<f64>>,
        feature_names: Vec<String>,
    ) -> Result<Dataset, LearnError> {
        let n = features.n_rows();
        if n == 0 {
            return Err(LearnError::EmptyDataset);
        }
        if labels.len() != n {
            return Err(LearnError::LengthMismatch {
                what: "labels",
                expected: n,
                got: labels.len(),
            });
        }
        if subjects.len() != n {
            return Err(LearnError::LengthMismatch {
                what: "subjects",
                expected: n,
                got: subjects.len(),
            });
        }
        if feature_names.len() != features.n_cols() {
            return Err(LearnError::LengthMismatch {
                what: "feature names",
                expected: features.n_cols(),
                got: feature_names.len(),
            });
        }
        if let Some(w) = &weights {
            if w.len() != n {
                return Err(LearnError::LengthMismatch {
                    what: "weights",
                    expected: n,
                    got: w.len(),
                });
            }
            if let Some(row) = w.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err(LearnError::NonPositiveWeight { row });
            }
        }
        Ok(Dataset {
            subjects,
            features,
            labels,
            weights,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.features.n_rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            subjects: rows.iter().map(|&i| self.subjects[i].clone()).collect(),
            features: self.features.select_rows(rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            weights: self
                .weights
                .as_ref()
                .map(|w| rows.iter().map(|&i| w[i]).collect()),
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Dataset {
        Dataset {
            subjects: self.subjects.clone(),
            features: self.features.select_columns(cols),
            labels: self.labels.clone(),
            weights: self.weights.clone(),
            feature_names: cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
        }
    }
}

/// Cost-sensitive weights: w_i = (1/C) / p_c where C is the number of
/// categories present and p_c the empirical share of the sample's category.
/// With this constant the weights sum to the sample count.
pub fn sample_weights(labels: &[Category]) -> Result<Vec<f64>, LearnError> {
    if labels.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let mut counts: BTreeMap<Category, usize> = BTreeMap::new();
    for &c in labels {
        *counts.entry(c).or_insert(0) += 1;
    }
    let n = labels.len() as f64;
    let c = counts.len() as f64;
    Ok(labels
        .iter()
        .map(|cat| n / (c * counts[cat] as f64))
        .collect())
}

/// Per-column scale factors fit on training rows only: each column is divided
/// by its maximum absolute value; all-zero columns pass through unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxAbsScaler {
    pub max_abs: Vec<f64>,
}

impl MaxAbsScaler {
    pub fn fit(train: &Matrix) -> MaxAbsScaler {
        let mut max_abs = vec![0.0f64; train.n_cols()];
        for i in 0..train.n_rows() {
            for (j, &v) in train.row(i).iter().enumerate() {
                let a = v.abs();
                if a > max_abs[j] {
                    max_abs[j] = a;
                }
            }
        }
        MaxAbsScaler { max_abs }
    }

    pub fn transform_row(&self, row: &mut [f64]) {
        for (v, &m) in row.iter_mut().zip(&self.max_abs) {
            if m > 0.0 {
                *v /= m;
            }
        }
    }

    pub fn transform(&self, m: &Matrix) -> Matrix {
        let mut out = m.clone();
        for i in 0..out.rows {
            let start = i * out.cols;
            self.transform_row(&mut out.data[start..start + out.cols]);
        }
        out
    }
}

/// Disjoint index sets covering all rows, stratified so each fold's
/// per-category count differs from the proportional share by at most one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub folds: Vec<Vec<usize>>,
    pub seed: u64,
}

/// Deterministic stratified k-fold split. Per category the indices are
/// shuffled, then dealt round-robin with a counter that continues across
/// categories so overall fold sizes also differ by at most one.
pub fn stratified_kfold(
    labels: &[Category],
    k: usize,
    seed: u64,
) -> Result<FoldPlan, LearnError> {
    let n = labels.len();
    if k < 2 || k > n {
        return Err(LearnError::BadFoldCount { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_KFOLD, 0));
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut cursor = 0usize;
    for cat in Category::ALL {
        let mut idxs: Vec<usize> = (0..n).filter(|&i| labels[i] == cat).collect();
        if idxs.is_empty() {
            continue;
        }
        // Fisher-Yates
        for i in (1..idxs.len()).rev() {
            let j = rng.gen_range(0..=i);
            idxs.swap(i, j);
        }
        for idx in idxs {
            folds[cursor % k].push(idx);
            cursor += 1;
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(FoldPlan { folds, seed })
}

impl FoldPlan {
    /// All indices not in fold `f`, ascending.
    pub fn train_indices(&self, f: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != f)
            .flat_map(|(_, fold)| fold.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }
}

pub(crate) const STREAM_KFOLD: u64 = 1;
pub(crate) const STREAM_FOLD_TRAIN: u64 = 2;
pub(crate) const STREAM_FOREST_TREE: u64 = 3;
pub(crate) const STREAM_PERCEPTRON_EPOCH: u64 = 4;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Splittable seeding: independent deterministic streams are derived by
/// hashing (root, stream, index), so parallel training stays reproducible.
pub fn derive_seed(root: u64, stream: u64, index: u64) -> u64 {
    splitmix64(root ^ splitmix64(stream ^ splitmix64(index)))
}

/// Breaks score ties toward the lowest category ordinal.
pub(crate) fn argmax_category(scores: &[f64]) -> Category {
    let mut best = 0usize;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    Category::from_ordinal(best).expect("score vector has at most 7 entries")
}

/// Number of candidate features examined at each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSubsample {
    All,
    Sqrt,
    Count(usize),
}

impl FeatureSubsample {
    pub fn resolve(&self, n_features: usize) -> usize {
        match self {
            FeatureSubsample::All => n_features,
            FeatureSubsample::Sqrt => ((n_features as f64).sqrt().floor() as usize).max(1),
            FeatureSubsample::Count(k) => (*k).clamp(1, n_features),
        }
    }
}

impl fmt::Display for FeatureSubsample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSubsample::All => f.write_str("all"),
            FeatureSubsample::Sqrt => f.write_str("sqrt"),
            FeatureSubsample::Count(k) => write!(f, "{k}"),
        }
    }
}

impl FromStr for FeatureSubsample {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(FeatureSubsample::All),
            "sqrt" => Ok(FeatureSubsample::Sqrt),
            other => other
                .parse::<usize>()
                .map(FeatureSubsample::Count)
                .map_err(|_| format!("expected 'all', 'sqrt' or a count, got {other:?}")),
        }
    }
}

impl Serialize for FeatureSubsample {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for FeatureSubsample {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Logistic,
    Perceptron,
    DecisionTree,
    RandomForest,
    Gbt,
}

impl Serialize for ModelKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ModelKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Logistic,
        ModelKind::Perceptron,
        ModelKind::DecisionTree,
        ModelKind::RandomForest,
        ModelKind::Gbt,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Perceptron => "perceptron",
            ModelKind::DecisionTree => "tree",
            ModelKind::RandomForest => "random-forest",
            ModelKind::Gbt => "gbt",
        }
    }

    pub fn is_tree_family(&self) -> bool {
        matches!(
            self,
            ModelKind::DecisionTree | ModelKind::RandomForest | ModelKind::Gbt
        )
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = LearnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logistic" | "logistic-regression" => Ok(ModelKind::Logistic),
            "perceptron" => Ok(ModelKind::Perceptron),
            "tree" | "decision-tree" => Ok(ModelKind::DecisionTree),
            "forest" | "random-forest" => Ok(ModelKind::RandomForest),
            "gbt" | "boosted-trees" => Ok(ModelKind::Gbt),
            other => Err(LearnError::UnknownModelKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub tolerance: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            iterations: 500,
            learning_rate: 0.5,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerceptronConfig {
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for PerceptronConfig {
    fn default() -> Self {
        PerceptronConfig {
            epochs: 50,
            learning_rate: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub max_depth: Option<u32>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<u32>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub features_per_split: FeatureSubsample,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 300,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            features_per_split: FeatureSubsample::Sqrt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtConfig {
    pub rounds: usize,
    pub max_depth: u32,
    pub learning_rate: f64,
    pub lambda: f64,
    pub max_bins: usize,
    pub min_child_weight: f64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            rounds: 200,
            max_depth: 6,
            learning_rate: 0.1,
            lambda: 1.0,
            max_bins: 64,
            min_child_weight: 1e-3,
        }
    }
}

/// All classifier hyperparameters. Defaults mirror `config/default.toml`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnConfig {
    pub logistic: LogisticConfig,
    pub perceptron: PerceptronConfig,
    pub tree: TreeConfig,
    pub forest: ForestConfig,
    pub gbt: GbtConfig,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    Linear(linear::LinearModel),
    Tree(tree::DecisionTree),
    Forest(Vec<tree::DecisionTree>),
    Gbt(gbt::GbtModel),
}

/// A trained classifier plus everything needed to reproduce and apply it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub version: u32,
    pub kind: ModelKind,
    pub config: LearnConfig,
    pub seed: u64,
    pub feature_names: Vec<String>,
    pub scaler: Option<MaxAbsScaler>,
    pub params: ModelParams,
    /// Set when the training set collapsed to a single category and the
    /// model is a constant predictor.
    pub degenerate: bool,
}

impl Model {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Model, LearnError> {
        let model: Model =
            serde_json::from_str(s).map_err(|e| LearnError::BadModelFile(e.to_string()))?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(LearnError::BadModelFile(format!(
                "unsupported model version {}",
                model.version
            )));
        }
        Ok(model)
    }
}

fn constant_params(kind: ModelKind, cat: Category, n_features: usize) -> ModelParams {
    match kind {
        ModelKind::Logistic | ModelKind::Perceptron => {
            let mut bias = vec![0.0; Category::COUNT];
            bias[cat.ordinal()] = 1.0;
            ModelParams::Linear(linear::LinearModel {
                weights: vec![0.0; Category::COUNT * n_features],
                bias,
                n_features,
            })
        }
        ModelKind::DecisionTree => ModelParams::Tree(tree::DecisionTree::constant(cat)),
        ModelKind::RandomForest => ModelParams::Forest(vec![tree::DecisionTree::constant(cat)]),
        ModelKind::Gbt => ModelParams::Gbt(gbt::GbtModel::constant(cat)),
    }
}

/// Trains a classifier of the given kind. Deterministic given the seed.
/// Linear models consume max-abs-normalized features; tree-family models see
/// the raw columns. A single-category training set yields a constant
/// predictor with the `degenerate` flag set.
pub fn train(
    kind: ModelKind,
    dataset: &Dataset,
    config: &LearnConfig,
    seed: u64,
) -> Result<Model, LearnError> {
    if dataset.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let y: Vec<usize> = dataset.labels.iter().map(|c| c.ordinal()).collect();
    let ones;
    let w: &[f64] = match &dataset.weights {
        Some(w) => w,
        None => {
            ones = vec![1.0; dataset.len()];
            &ones
        }
    };

    let first = y[0];
    if y.iter().all(|&c| c == first) {
        return Ok(Model {
            version: MODEL_FORMAT_VERSION,
            kind,
            config: config.clone(),
            seed,
            feature_names: dataset.feature_names.clone(),
            scaler: None,
            params: constant_params(kind, dataset.labels[0], dataset.features.n_cols()),
            degenerate: true,
        });
    }

    let (scaler, params) = match kind {
        ModelKind::Logistic => {
            let scaler = MaxAbsScaler::fit(&dataset.features);
            let x = scaler.transform(&dataset.features);
            let params = linear::fit_logistic(&x, &y, w, &config.logistic);
            (Some(scaler), ModelParams::Linear(params))
        }
        ModelKind::Perceptron => {
            let scaler = MaxAbsScaler::fit(&dataset.features);
            let x = scaler.transform(&dataset.features);
            let params = linear::fit_perceptron(&x, &y, w, &config.perceptron, seed);
            (Some(scaler), ModelParams::Linear(params))
        }
        ModelKind::DecisionTree => {
            let t = tree::fit_tree(&dataset.features, &y, w, &config.tree, None, seed);
            (None, ModelParams::Tree(t))
        }
        ModelKind::RandomForest => {
            let trees = forest::fit_forest(&dataset.features, &y, w, &config.forest, seed);
            (None, ModelParams::Forest(trees))
        }
        ModelKind::Gbt => {
            let m = gbt::fit_gbt(&dataset.features, &y, w, &config.gbt);
            (None, ModelParams::Gbt(m))
        }
    };
    Ok(Model {
        version: MODEL_FORMAT_VERSION,
        kind,
        config: config.clone(),
        seed,
        feature_names: dataset.feature_names.clone(),
        scaler,
        params,
        degenerate: false,
    })
}

/// Class scores for one (already scaled, for linear models) feature row.
fn score_row(params: &ModelParams, row: &[f64]) -> Vec<f64> {
    match params {
        ModelParams::Linear(m) => m.scores(row),
        ModelParams::Tree(t) => t.class_distribution(row).to_vec(),
        ModelParams::Forest(trees) => {
            let mut scores = vec![0.0; Category::COUNT];
            for t in trees {
                let dist = t.class_distribution(row);
                for (s, d) in scores.iter_mut().zip(dist.iter()) {
                    *s += d;
                }
            }
            for s in &mut scores {
                *s /= trees.len() as f64;
            }
            scores
        }
        ModelParams::Gbt(m) => m.scores(row),
    }
}

/// Predicts a category per row: argmax over class scores, ties broken toward
/// the lowest category ordinal.
pub fn predict(model: &Model, features: &Matrix) -> Result<Vec<Category>, LearnError> {
    if features.n_cols() != model.feature_names.len() {
        return Err(LearnError::ColumnMismatch {
            expected: model.feature_names.len(),
            got: features.n_cols(),
        });
    }
    let mut out = Vec::with_capacity(features.n_rows());
    let mut buf = Vec::new();
    for i in 0..features.n_rows() {
        let row = features.row(i);
        let scores = if let Some(scaler) = &model.scaler {
            buf.clear();
            buf.extend_from_slice(row);
            scaler.transform_row(&mut buf);
            score_row(&model.params, &buf)
        } else {
            score_row(&model.params, row)
        };
        out.push(argmax_category(&scores));
    }
    Ok(out)
}

/// Split-gain importance summed per feature. For classification trees a
/// split contributes its mass-weighted entropy reduction normalized by the
/// tree's root weight (forests average over trees); boosted trees report the
/// total objective gain of their splits. Ties rank by canonical index.
pub fn feature_importance(model: &Model) -> Result<Vec<(String, f64)>, LearnError> {
    let d = model.feature_names.len();
    let mut scores = vec![0.0f64; d];
    match &model.params {
        ModelParams::Tree(t) => t.add_importance(&mut scores),
        ModelParams::Forest(trees) => {
            for t in trees {
                t.add_importance(&mut scores);
            }
            for s in &mut scores {
                *s /= trees.len() as f64;
            }
        }
        ModelParams::Gbt(m) => m.add_importance(&mut scores),
        ModelParams::Linear(_) => return Err(LearnError::ImportanceUnsupported(model.kind)),
    }
    let ranked: Vec<(String, f64)> = model
        .feature_names
        .iter()
        .cloned()
        .zip(scores)
        .collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        ranked[b]
            .1
            .partial_cmp(&ranked[a].1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let ranked = order.into_iter().map(|i| ranked[i].clone()).collect();
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_balance_and_sum_to_n() {
        let labels = vec![
            Category::Exchange,
            Category::Exchange,
            Category::Faucet,
            Category::Faucet,
        ];
        let w = sample_weights(&labels).unwrap();
        assert_eq!(w, vec![1.0, 1.0, 1.0, 1.0]);

        let labels = vec![
            Category::Exchange,
            Category::Exchange,
            Category::Exchange,
            Category::Faucet,
        ];
        let w = sample_weights(&labels).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((w[3] - 2.0).abs() < 1e-12);
        assert!((w.iter().sum::<f64>() - 4.0).abs() < 1e-12);

        assert!(sample_weights(&[]).is_err());
    }

    #[test]
    fn max_abs_scaler_rules() {
        let m = Matrix::from_rows(vec![vec![2.0, 0.0], vec![-4.0, 0.0]]).unwrap();
        let scaler = MaxAbsScaler::fit(&m);
        assert_eq!(scaler.max_abs, vec![4.0, 0.0]);
        let t = scaler.transform(&m);
        assert_eq!(t.row(0), &[0.5, 0.0]);
        assert_eq!(t.row(1), &[-1.0, 0.0]);
        // values outside the training range are not clamped
        let test = Matrix::from_rows(vec![vec![8.0, 3.0]]).unwrap();
        let t = scaler.transform(&test);
        assert_eq!(t.row(0), &[2.0, 3.0]);
    }

    #[test]
    fn kfold_exact_divisibility_gives_one_per_category() {
        let mut labels = Vec::new();
        for cat in Category::ALL {
            for _ in 0..10 {
                labels.push(cat);
            }
        }
        let plan = stratified_kfold(&labels, 10, 7).unwrap();
        for fold in &plan.folds {
            assert_eq!(fold.len(), 7);
            for cat in Category::ALL {
                let count = fold.iter().filter(|&&i| labels[i] == cat).count();
                assert_eq!(count, 1);
            }
        }
    }

    #[test]
    fn kfold_spreads_remainder() {
        let labels = vec![Category::Mixer; 10];
        let plan = stratified_kfold(&labels, 3, 1).unwrap();
        let mut sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![3, 3, 4]);
    }

    #[test]
    fn kfold_is_deterministic_and_partitions() {
        let labels: Vec<Category> = (0..23)
            .map(|i| Category::from_ordinal(i % 7).unwrap())
            .collect();
        let a = stratified_kfold(&labels, 4, 42).unwrap();
        let b = stratified_kfold(&labels, 4, 42).unwrap();
        assert_eq!(a, b);
        let c = stratified_kfold(&labels, 4, 43).unwrap();
        assert_ne!(a, c);

        let mut all: Vec<usize> = a.folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());

        assert!(stratified_kfold(&labels, 24, 0).is_err());
        assert!(stratified_kfold(&labels, 1, 0).is_err());
    }

    #[test]
    fn derive_seed_separates_streams() {
        let a = derive_seed(1, STREAM_KFOLD, 0);
        let b = derive_seed(1, STREAM_FOLD_TRAIN, 0);
        let c = derive_seed(2, STREAM_KFOLD, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(1, STREAM_KFOLD, 0));
    }

    #[test]
    fn argmax_breaks_ties_toward_lowest_ordinal() {
        assert_eq!(argmax_category(&[0.5, 0.5, 0.1]), Category::Exchange);
        assert_eq!(argmax_category(&[0.1, 0.5, 0.5]), Category::Faucet);
    }

    #[test]
    fn model_kind_parsing() {
        assert_eq!("gbt".parse::<ModelKind>().unwrap(), ModelKind::Gbt);
        assert_eq!(
            "random-forest".parse::<ModelKind>().unwrap(),
            ModelKind::RandomForest
        );
        assert!("svm".parse::<ModelKind>().is_err());
    }
}
