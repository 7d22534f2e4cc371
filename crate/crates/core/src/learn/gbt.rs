//! Gradient-boosted decision trees with a multiclass softmax objective.
//! Feature values are pre-binned into per-feature histograms (quantile cut
//! points, at most `max_bins` bins), so split search per node is a linear
//! scan over bins. Leaf values are second-order estimates
//! -G / (H + lambda), shrunk by the learning rate at fit time.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GbtConfig, Matrix};
use crate::model::Category;

const K: usize = Category::COUNT;
const MIN_GAIN: f64 = 1e-12;
const PRIOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegTreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Objective gain of the split (second-order approximation).
        gain: f64,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTree {
    pub nodes: Vec<RegTreeNode>,
}

impl RegTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                RegTreeNode::Leaf { value } => return *value,
                RegTreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    idx = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }
}

/// Additive model: `trees[round][class]` on top of per-class base scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub base_scores: Vec<f64>,
    pub trees: Vec<Vec<RegTree>>,
}

impl GbtModel {
    pub fn constant(cat: Category) -> GbtModel {
        let mut base_scores = vec![PRIOR_FLOOR.ln(); K];
        base_scores[cat.ordinal()] = 0.0;
        GbtModel {
            base_scores,
            trees: Vec::new(),
        }
    }

    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        let mut scores = self.base_scores.clone();
        for round in &self.trees {
            for (k, tree) in round.iter().enumerate() {
                scores[k] += tree.predict(row);
            }
        }
        scores
    }

    /// Adds total split gains per feature across every tree.
    pub fn add_importance(&self, scores: &mut [f64]) {
        for round in &self.trees {
            for tree in round {
                for node in &tree.nodes {
                    if let RegTreeNode::Split { feature, gain, .. } = node {
                        scores[*feature] += gain;
                    }
                }
            }
        }
    }
}

/// Per-feature cut points plus the bin code of every (row, feature) cell.
struct BinnedMatrix {
    cuts: Vec<Vec<f64>>,
    codes: Vec<u8>,
    d: usize,
}

impl BinnedMatrix {
    fn code(&self, row: usize, feature: usize) -> usize {
        self.codes[row * self.d + feature] as usize
    }
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

fn build_bins(x: &Matrix, max_bins: usize) -> BinnedMatrix {
    let n = x.n_rows();
    let d = x.n_cols();
    let max_bins = max_bins.clamp(2, 256);
    let mut cuts: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut sorted = Vec::with_capacity(n);
    for f in 0..d {
        sorted.clear();
        sorted.extend((0..n).map(|i| x.get(i, f)));
        sorted.sort_unstable_by(f64::total_cmp);
        let mut distinct = sorted.clone();
        distinct.dedup();
        let mut feature_cuts = Vec::new();
        if distinct.len() <= max_bins {
            for pair in distinct.windows(2) {
                feature_cuts.push(midpoint(pair[0], pair[1]));
            }
        } else {
            for b in 1..max_bins {
                let pos = b * n / max_bins;
                let (lo, hi) = (sorted[pos.saturating_sub(1)], sorted[pos]);
                if lo < hi {
                    feature_cuts.push(midpoint(lo, hi));
                }
            }
            feature_cuts.dedup();
        }
        cuts.push(feature_cuts);
    }
    let mut codes = vec![0u8; n * d];
    for i in 0..n {
        let row = x.row(i);
        for f in 0..d {
            let code = cuts[f].partition_point(|&c| c < row[f]);
            codes[i * d + f] = code as u8;
        }
    }
    BinnedMatrix { cuts, codes, d }
}

struct RegFitCtx<'a> {
    bins: &'a BinnedMatrix,
    g: &'a [f64],
    h: &'a [f64],
    cfg: &'a GbtConfig,
    nodes: Vec<RegTreeNode>,
    hist_g: Vec<f64>,
    hist_h: Vec<f64>,
    hist_n: Vec<u32>,
}

struct RegSplit {
    gain: f64,
    feature: usize,
    cut: usize,
}

impl<'a> RegFitCtx<'a> {
    fn find_split(&mut self, rows: &[u32], g_total: f64, h_total: f64) -> Option<RegSplit> {
        let lambda = self.cfg.lambda;
        let parent_obj = g_total * g_total / (h_total + lambda);
        let mut best: Option<RegSplit> = None;
        for f in 0..self.bins.d {
            let n_cuts = self.bins.cuts[f].len();
            if n_cuts == 0 {
                continue;
            }
            let n_bins = n_cuts + 1;
            self.hist_g[..n_bins].fill(0.0);
            self.hist_h[..n_bins].fill(0.0);
            self.hist_n[..n_bins].fill(0);
            for &i in rows {
                let code = self.bins.code(i as usize, f);
                self.hist_g[code] += self.g[i as usize];
                self.hist_h[code] += self.h[i as usize];
                self.hist_n[code] += 1;
            }
            let mut gl = 0.0;
            let mut hl = 0.0;
            let mut nl = 0u32;
            for b in 0..n_cuts {
                gl += self.hist_g[b];
                hl += self.hist_h[b];
                nl += self.hist_n[b];
                if nl == 0 {
                    continue;
                }
                if nl as usize == rows.len() {
                    break;
                }
                let gr = g_total - gl;
                let hr = h_total - hl;
                if hl < self.cfg.min_child_weight || hr < self.cfg.min_child_weight {
                    continue;
                }
                let gain = 0.5
                    * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent_obj);
                if gain > MIN_GAIN && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(RegSplit { gain, feature: f, cut: b });
                }
            }
        }
        best
    }

    fn build(&mut self, rows: Vec<u32>, depth: u32) -> usize {
        let g_total: f64 = rows.iter().map(|&i| self.g[i as usize]).sum();
        let h_total: f64 = rows.iter().map(|&i| self.h[i as usize]).sum();
        let split = if depth < self.cfg.max_depth && rows.len() >= 2 {
            self.find_split(&rows, g_total, h_total)
        } else {
            None
        };
        match split {
            None => {
                let value =
                    -g_total / (h_total + self.cfg.lambda) * self.cfg.learning_rate;
                let idx = self.nodes.len();
                self.nodes.push(RegTreeNode::Leaf { value });
                idx
            }
            Some(best) => {
                let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
                    .into_iter()
                    .partition(|&i| self.bins.code(i as usize, best.feature) <= best.cut);
                let threshold = self.bins.cuts[best.feature][best.cut];
                let idx = self.nodes.len();
                self.nodes.push(RegTreeNode::Split {
                    feature: best.feature,
                    threshold,
                    left: 0,
                    right: 0,
                    gain: best.gain,
                });
                let left = self.build(left_rows, depth + 1);
                let right = self.build(right_rows, depth + 1);
                if let RegTreeNode::Split { left: l, right: r, .. } = &mut self.nodes[idx] {
                    *l = left;
                    *r = right;
                }
                idx
            }
        }
    }
}

fn fit_reg_tree(bins: &BinnedMatrix, g: &[f64], h: &[f64], cfg: &GbtConfig) -> RegTree {
    let max_bins = cfg.max_bins.clamp(2, 256);
    let mut ctx = RegFitCtx {
        bins,
        g,
        h,
        cfg,
        nodes: Vec::new(),
        hist_g: vec![0.0; max_bins],
        hist_h: vec![0.0; max_bins],
        hist_n: vec![0; max_bins],
    };
    let rows: Vec<u32> = (0..g.len() as u32).collect();
    ctx.build(rows, 0);
    RegTree { nodes: ctx.nodes }
}

/// Fits the boosted ensemble: per round, softmax probabilities give the
/// per-class gradients and hessians, and one regression tree per class is
/// added. Deterministic; there is no sampling.
pub fn fit_gbt(x: &Matrix, y: &[usize], w: &[f64], cfg: &GbtConfig) -> GbtModel {
    let n = x.n_rows();
    let bins = build_bins(x, cfg.max_bins);

    let total_w: f64 = w.iter().sum();
    let mut prior = [0.0f64; K];
    for (i, &label) in y.iter().enumerate() {
        prior[label] += w[i];
    }
    let base_scores: Vec<f64> = prior
        .iter()
        .map(|&p| (p / total_w).max(PRIOR_FLOOR).ln())
        .collect();

    let mut scores = vec![0.0f64; n * K];
    for i in 0..n {
        scores[i * K..(i + 1) * K].copy_from_slice(&base_scores);
    }
    let mut probs = vec![0.0f64; n * K];
    let mut trees: Vec<Vec<RegTree>> = Vec::with_capacity(cfg.rounds);

    for _round in 0..cfg.rounds {
        for i in 0..n {
            let row = &scores[i * K..(i + 1) * K];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            let out = &mut probs[i * K..(i + 1) * K];
            for (o, &s) in out.iter_mut().zip(row.iter()) {
                *o = (s - max).exp();
                denom += *o;
            }
            for o in out.iter_mut() {
                *o /= denom;
            }
        }
        let round_trees: Vec<RegTree> = (0..K)
            .into_par_iter()
            .map(|k| {
                let mut g = Vec::with_capacity(n);
                let mut h = Vec::with_capacity(n);
                for i in 0..n {
                    let p = probs[i * K + k];
                    let target = if y[i] == k { 1.0 } else { 0.0 };
                    g.push(w[i] * (p - target));
                    h.push((w[i] * p * (1.0 - p)).max(1e-16));
                }
                fit_reg_tree(&bins, &g, &h, cfg)
            })
            .collect();
        for i in 0..n {
            let row = x.row(i);
            for (k, tree) in round_trees.iter().enumerate() {
                scores[i * K + k] += tree.predict(row);
            }
        }
        trees.push(round_trees);
    }
    GbtModel { base_scores, trees }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{predict, train, Dataset, LearnConfig, ModelKind, TreeConfig};
    use crate::model::Category;

    fn dataset(rows: Vec<Vec<f64>>, labels: Vec<Category>) -> Dataset {
        let names = (0..rows[0].len()).map(|i| format!("f{i}")).collect();
        Dataset::new(
            (0..rows.len()).map(|i| format!("s{i}")).collect(),
            Matrix::from_rows(rows).unwrap(),
            labels,
            None,
            names,
        )
        .unwrap()
    }

    #[test]
    fn one_round_depth_one_unit_rate_equals_a_stump() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let labels = vec![
            Category::Exchange,
            Category::Exchange,
            Category::Faucet,
            Category::Faucet,
        ];
        let ds = dataset(rows, labels);

        let gbt_cfg = LearnConfig {
            gbt: GbtConfig {
                rounds: 1,
                max_depth: 1,
                learning_rate: 1.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let gbt = train(ModelKind::Gbt, &ds, &gbt_cfg, 0).unwrap();
        let gbt_preds = predict(&gbt, &ds.features).unwrap();

        let stump_cfg = LearnConfig {
            tree: TreeConfig {
                max_depth: Some(1),
                ..Default::default()
            },
            ..Default::default()
        };
        let stump = train(ModelKind::DecisionTree, &ds, &stump_cfg, 0).unwrap();
        let stump_preds = predict(&stump, &ds.features).unwrap();

        assert_eq!(gbt_preds, stump_preds);
        assert_eq!(gbt_preds, ds.labels);
    }

    #[test]
    fn gbt_fits_separable_data() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..30 {
            let offset = (i % 5) as f64 * 0.05;
            rows.push(vec![offset, 1.0 - offset]);
            labels.push(Category::Exchange);
            rows.push(vec![5.0 + offset, offset]);
            labels.push(Category::Gambling);
            rows.push(vec![offset, 8.0 + offset]);
            labels.push(Category::Hyip);
        }
        let ds = dataset(rows, labels);
        let cfg = LearnConfig {
            gbt: GbtConfig {
                rounds: 15,
                max_depth: 3,
                learning_rate: 0.3,
                ..Default::default()
            },
            ..Default::default()
        };
        let model = train(ModelKind::Gbt, &ds, &cfg, 0).unwrap();
        let preds = predict(&model, &ds.features).unwrap();
        assert_eq!(preds, ds.labels);
    }

    #[test]
    fn gbt_is_deterministic() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i % 7) as f64, ((i * 13) % 11) as f64])
            .collect();
        let labels: Vec<Category> = (0..40)
            .map(|i| Category::from_ordinal(i % 4).unwrap())
            .collect();
        let ds = dataset(rows, labels);
        let cfg = LearnConfig {
            gbt: GbtConfig {
                rounds: 5,
                max_depth: 3,
                ..Default::default()
            },
            ..Default::default()
        };
        let a = train(ModelKind::Gbt, &ds, &cfg, 0).unwrap();
        let b = train(ModelKind::Gbt, &ds, &cfg, 0).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn binning_handles_many_distinct_values() {
        let rows: Vec<Vec<f64>> = (0..500).map(|i| vec![i as f64 * 0.37]).collect();
        let m = Matrix::from_rows(rows).unwrap();
        let bins = build_bins(&m, 64);
        assert!(bins.cuts[0].len() < 64);
        assert!(!bins.cuts[0].is_empty());
        // codes must be monotone in the feature value
        for i in 1..500 {
            assert!(bins.code(i, 0) >= bins.code(i - 1, 0));
        }
    }
}
