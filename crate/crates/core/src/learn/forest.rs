//! Random forest: bootstrap-sampled entropy trees with per-split feature
//! subsampling. Tree seeds derive from the root seed so parallel fits are
//! reproducible; predictions average the per-tree class distributions.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::tree::{fit_tree_on, DecisionTree};
use super::{derive_seed, ForestConfig, Matrix, TreeConfig, STREAM_FOREST_TREE};

pub fn fit_forest(
    x: &Matrix,
    y: &[usize],
    w: &[f64],
    cfg: &ForestConfig,
    seed: u64,
) -> Vec<DecisionTree> {
    let n = x.n_rows();
    let tree_cfg = TreeConfig {
        max_depth: cfg.max_depth,
        min_samples_split: cfg.min_samples_split,
        min_samples_leaf: cfg.min_samples_leaf,
    };
    let k = cfg.features_per_split.resolve(x.n_cols());
    (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let tree_seed = derive_seed(seed, STREAM_FOREST_TREE, t as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
            let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            // split-search rng continues from the bootstrap draw
            fit_tree_on(x, y, w, &tree_cfg, Some(k), rng.gen(), rows)
        })
        .collect()
}
