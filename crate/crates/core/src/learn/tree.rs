//! Axis-aligned binary classification tree maximizing weighted information
//! gain (entropy reduction). Split search is exact: candidate thresholds are
//! midpoints between consecutive distinct feature values.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Matrix, TreeConfig};
use crate::model::Category;

const K: usize = Category::COUNT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Mass-weighted entropy reduction of this split:
        /// W_p * H_p - W_l * H_l - W_r * H_r.
        gain: f64,
    },
    Leaf {
        class_weights: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
    pub root_weight: f64,
}

impl DecisionTree {
    /// Single-leaf tree that always predicts `cat`.
    pub fn constant(cat: Category) -> DecisionTree {
        let mut class_weights = vec![0.0; K];
        class_weights[cat.ordinal()] = 1.0;
        DecisionTree {
            nodes: vec![TreeNode::Leaf { class_weights }],
            root_weight: 1.0,
        }
    }

    fn leaf_for(&self, row: &[f64]) -> &[f64] {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                TreeNode::Leaf { class_weights } => return class_weights,
                TreeNode::Split {
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

    /// Normalized class weights of the leaf the row falls into.
    pub fn class_distribution(&self, row: &[f64]) -> [f64; K] {
        let leaf = self.leaf_for(row);
        let total: f64 = leaf.iter().sum();
        let mut out = [0.0; K];
        if total > 0.0 {
            for (o, &w) in out.iter_mut().zip(leaf.iter()) {
                *o = w / total;
            }
        }
        out
    }

    /// Adds this tree's per-feature split gains, normalized by the root
    /// weight, into `scores`.
    pub fn add_importance(&self, scores: &mut [f64]) {
        if self.root_weight <= 0.0 {
            return;
        }
        for node in &self.nodes {
            if let TreeNode::Split { feature, gain, .. } = node {
                scores[*feature] += gain / self.root_weight;
            }
        }
    }

    /// Total mass-weighted entropy reduction: root entropy minus the
    /// weight-averaged leaf entropies, in per-unit-weight terms times the
    /// root weight. Used by the gain-conservation check.
    pub fn entropy_reduction(&self) -> f64 {
        fn node_entropy_mass(nodes: &[TreeNode], idx: usize, leaves: &mut f64) -> Vec<f64> {
            match &nodes[idx] {
                TreeNode::Leaf { class_weights } => {
                    let w: f64 = class_weights.iter().sum();
                    *leaves += w * entropy(class_weights, w);
                    class_weights.clone()
                }
                TreeNode::Split { left, right, .. } => {
                    let l = node_entropy_mass(nodes, *left, leaves);
                    let r = node_entropy_mass(nodes, *right, leaves);
                    l.iter().zip(r.iter()).map(|(a, b)| a + b).collect()
                }
            }
        }
        let mut leaf_mass = 0.0;
        let root_weights = node_entropy_mass(&self.nodes, 0, &mut leaf_mass);
        let w: f64 = root_weights.iter().sum();
        w * entropy(&root_weights, w) - leaf_mass
    }
}

fn entropy(class_weights: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let mut h = 0.0;
    for &w in class_weights {
        if w > 0.0 {
            let p = w / total;
            h -= p * p.log2();
        }
    }
    h
}

struct FitCtx<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    w: &'a [f64],
    cfg: &'a TreeConfig,
    features_per_split: Option<usize>,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
    // scratch reused across nodes
    sorted: Vec<(f64, usize)>,
    feature_buf: Vec<usize>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl<'a> FitCtx<'a> {
    fn class_weights(&self, rows: &[usize]) -> ([f64; K], f64) {
        let mut cw = [0.0; K];
        for &i in rows {
            cw[self.y[i]] += self.w[i];
        }
        let total = cw.iter().sum();
        (cw, total)
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.x.n_cols();
        match self.features_per_split {
            None => (0..d).collect(),
            Some(k) if k >= d => (0..d).collect(),
            Some(k) => {
                // partial Fisher-Yates over the reusable index buffer
                if self.feature_buf.len() != d {
                    self.feature_buf = (0..d).collect();
                }
                for i in 0..k {
                    let j = self.rng.gen_range(i..d);
                    self.feature_buf.swap(i, j);
                }
                let mut picked: Vec<usize> = self.feature_buf[..k].to_vec();
                picked.sort_unstable();
                picked
            }
        }
    }

    fn find_split(
        &mut self,
        rows: &[usize],
        node_weights: &[f64; K],
        node_total: f64,
        node_entropy: f64,
    ) -> Option<BestSplit> {
        let min_leaf = self.cfg.min_samples_leaf.max(1);
        let parent_mass = node_total * node_entropy;
        let mut best: Option<BestSplit> = None;
        for f in self.candidate_features() {
            self.sorted.clear();
            self.sorted
                .extend(rows.iter().map(|&i| (self.x.get(i, f), i)));
            self.sorted
                .sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

            let mut left = [0.0f64; K];
            let mut left_total = 0.0f64;
            let mut left_count = 0usize;
            let n = self.sorted.len();
            let mut idx = 0usize;
            while idx < n {
                // absorb the run of equal values
                let value = self.sorted[idx].0;
                while idx < n && self.sorted[idx].0 == value {
                    let i = self.sorted[idx].1;
                    left[self.y[i]] += self.w[i];
                    left_total += self.w[i];
                    left_count += 1;
                    idx += 1;
                }
                if idx == n {
                    break;
                }
                if left_count < min_leaf || n - left_count < min_leaf {
                    continue;
                }
                let mut right = [0.0f64; K];
                for c in 0..K {
                    right[c] = (node_weights[c] - left[c]).max(0.0);
                }
                let right_total = (node_total - left_total).max(0.0);
                let gain = (parent_mass
                    - left_total * entropy(&left, left_total)
                    - right_total * entropy(&right, right_total))
                .max(0.0);
                // Impure nodes split even at zero gain (both children are
                // strict subsets, so recursion still terminates); ties keep
                // the first candidate in (feature, threshold) order.
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    let next = self.sorted[idx].0;
                    let mut threshold = value + (next - value) / 2.0;
                    // keep the partition stable if the midpoint rounds up
                    if threshold >= next {
                        threshold = value;
                    }
                    best = Some(BestSplit {
                        gain,
                        feature: f,
                        threshold,
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, rows: Vec<usize>, depth: u32) -> usize {
        let (cw, total) = self.class_weights(&rows);
        let h = entropy(&cw, total);
        let at_depth_limit = self.cfg.max_depth.is_some_and(|d| depth >= d);
        let splittable =
            !at_depth_limit && rows.len() >= self.cfg.min_samples_split.max(2) && h > 0.0;
        let split = if splittable {
            self.find_split(&rows, &cw, total, h)
        } else {
            None
        };
        match split {
            None => {
                let idx = self.nodes.len();
                self.nodes.push(TreeNode::Leaf {
                    class_weights: cw.to_vec(),
                });
                idx
            }
            Some(best) => {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
                    .into_iter()
                    .partition(|&i| self.x.get(i, best.feature) <= best.threshold);
                let idx = self.nodes.len();
                self.nodes.push(TreeNode::Split {
                    feature: best.feature,
                    threshold: best.threshold,
                    left: 0,
                    right: 0,
                    gain: best.gain,
                });
                let left = self.build(left_rows, depth + 1);
                let right = self.build(right_rows, depth + 1);
                if let TreeNode::Split {
                    left: l, right: r, ..
                } = &mut self.nodes[idx]
                {
                    *l = left;
                    *r = right;
                }
                idx
            }
        }
    }
}

/// Fits a tree on the given rows (all rows when `rows` is `None` at the
/// forest layer; here the full matrix). `features_per_split` enables the
/// per-node feature subsampling used by random forests.
pub fn fit_tree(
    x: &Matrix,
    y: &[usize],
    w: &[f64],
    cfg: &TreeConfig,
    features_per_split: Option<usize>,
    seed: u64,
) -> DecisionTree {
    fit_tree_on(x, y, w, cfg, features_per_split, seed, (0..x.n_rows()).collect())
}

pub(crate) fn fit_tree_on(
    x: &Matrix,
    y: &[usize],
    w: &[f64],
    cfg: &TreeConfig,
    features_per_split: Option<usize>,
    seed: u64,
    rows: Vec<usize>,
) -> DecisionTree {
    let mut ctx = FitCtx {
        x,
        y,
        w,
        cfg,
        features_per_split,
        rng: ChaCha8Rng::seed_from_u64(seed),
        nodes: Vec::new(),
        sorted: Vec::new(),
        feature_buf: Vec::new(),
    };
    let root_weight: f64 = rows.iter().map(|&i| w[i]).sum();
    ctx.build(rows, 0);
    DecisionTree {
        nodes: ctx.nodes,
        root_weight,
    }
}
