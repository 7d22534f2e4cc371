//! Linear classifiers over max-abs-normalized features: multinomial softmax
//! regression trained by full-batch gradient descent, and a weighted
//! one-vs-rest perceptron.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, LogisticConfig, Matrix, PerceptronConfig, STREAM_PERCEPTRON_EPOCH};
use crate::model::Category;

const K: usize = Category::COUNT;

/// Weight matrix (class-major, K x n_features) plus per-class bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub n_features: usize,
}

impl LinearModel {
    fn zeros(n_features: usize) -> LinearModel {
        LinearModel {
            weights: vec![0.0; K * n_features],
            bias: vec![0.0; K],
            n_features,
        }
    }

    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        let mut scores = self.bias.clone();
        for (k, score) in scores.iter_mut().enumerate() {
            let w = &self.weights[k * self.n_features..(k + 1) * self.n_features];
            *score += w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
        }
        scores
    }
}

fn softmax_in_place(scores: &mut [f64]) {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut denom = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        denom += *s;
    }
    for s in scores.iter_mut() {
        *s /= denom;
    }
}

/// Weighted multinomial softmax regression, full-batch gradient descent with
/// an early stop on the gradient max-norm.
pub fn fit_logistic(x: &Matrix, y: &[usize], w: &[f64], cfg: &LogisticConfig) -> LinearModel {
    let n = x.n_rows();
    let d = x.n_cols();
    let mut model = LinearModel::zeros(d);
    let sum_w: f64 = w.iter().sum();
    let mut grad_w = vec![0.0f64; K * d];
    let mut grad_b = vec![0.0f64; K];
    for _ in 0..cfg.iterations {
        grad_w.fill(0.0);
        grad_b.fill(0.0);
        for i in 0..n {
            let row = x.row(i);
            let mut p = model.scores(row);
            softmax_in_place(&mut p);
            for k in 0..K {
                let target = if y[i] == k { 1.0 } else { 0.0 };
                let gk = w[i] * (p[k] - target);
                grad_b[k] += gk;
                let gw = &mut grad_w[k * d..(k + 1) * d];
                for (g, &v) in gw.iter_mut().zip(row) {
                    *g += gk * v;
                }
            }
        }
        let mut max_grad = 0.0f64;
        for g in grad_w.iter_mut().chain(grad_b.iter_mut()) {
            *g /= sum_w;
            max_grad = max_grad.max(g.abs());
        }
        if max_grad < cfg.tolerance {
            break;
        }
        for (wv, g) in model.weights.iter_mut().zip(&grad_w) {
            *wv -= cfg.learning_rate * g;
        }
        for (bv, g) in model.bias.iter_mut().zip(&grad_b) {
            *bv -= cfg.learning_rate * g;
        }
    }
    model
}

/// One-vs-rest perceptron with weight-scaled updates. Sample order is
/// shuffled per epoch with a seed derived from the root seed.
pub fn fit_perceptron(
    x: &Matrix,
    y: &[usize],
    w: &[f64],
    cfg: &PerceptronConfig,
    seed: u64,
) -> LinearModel {
    let n = x.n_rows();
    let d = x.n_cols();
    let mut model = LinearModel::zeros(d);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_PERCEPTRON_EPOCH, epoch as u64));
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut updated = false;
        for &i in &order {
            let row = x.row(i);
            for k in 0..K {
                let target = if y[i] == k { 1.0 } else { -1.0 };
                let wk = &model.weights[k * d..(k + 1) * d];
                let score: f64 =
                    wk.iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + model.bias[k];
                if target * score <= 0.0 {
                    let step = cfg.learning_rate * w[i] * target;
                    let wk = &mut model.weights[k * d..(k + 1) * d];
                    for (wv, &v) in wk.iter_mut().zip(row) {
                        *wv += step * v;
                    }
                    model.bias[k] += step;
                    updated = true;
                }
            }
        }
        if !updated {
            break;
        }
    }
    model
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{predict, sample_weights, train, Dataset, LearnConfig, ModelKind};
    use crate::model::Category;

    fn dataset(rows: Vec<Vec<f64>>, labels: Vec<Category>, weighted: bool) -> Dataset {
        let names = (0..rows[0].len()).map(|i| format!("f{i}")).collect();
        let weights = weighted.then(|| sample_weights(&labels).unwrap());
        Dataset::new(
            (0..rows.len()).map(|i| format!("s{i}")).collect(),
            Matrix::from_rows(rows).unwrap(),
            labels,
            weights,
            names,
        )
        .unwrap()
    }

    fn accuracy(preds: &[Category], truths: &[Category]) -> f64 {
        let hits = preds.iter().zip(truths).filter(|(p, t)| p == t).count();
        hits as f64 / truths.len() as f64
    }

    /// Two linearly separable blobs with a clear margin, 100 points each.
    fn separable_blobs() -> Dataset {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..100 {
            let dx = (i % 10) as f64 * 0.05;
            let dy = (i / 10) as f64 * 0.05;
            rows.push(vec![1.0 + dx, 1.0 + dy]);
            labels.push(Category::Exchange);
            rows.push(vec![-1.0 - dx, -1.0 - dy]);
            labels.push(Category::Mixer);
        }
        dataset(rows, labels, true)
    }

    #[test]
    fn logistic_fits_separable_blobs() {
        let ds = separable_blobs();
        let model = train(ModelKind::Logistic, &ds, &LearnConfig::default(), 0).unwrap();
        let preds = predict(&model, &ds.features).unwrap();
        assert!(accuracy(&preds, &ds.labels) >= 0.99);
    }

    #[test]
    fn perceptron_fits_separable_blobs() {
        let ds = separable_blobs();
        let model = train(ModelKind::Perceptron, &ds, &LearnConfig::default(), 3).unwrap();
        let preds = predict(&model, &ds.features).unwrap();
        assert!(accuracy(&preds, &ds.labels) >= 0.99);
    }

    #[test]
    fn logistic_cannot_solve_xor() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..25 {
            for (a, b) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
                rows.push(vec![a, b]);
                let positive = (a > 0.5) ^ (b > 0.5);
                labels.push(if positive {
                    Category::Faucet
                } else {
                    Category::Exchange
                });
            }
        }
        let ds = dataset(rows, labels, false);
        let model = train(ModelKind::Logistic, &ds, &LearnConfig::default(), 0).unwrap();
        let preds = predict(&model, &ds.features).unwrap();
        assert!(accuracy(&preds, &ds.labels) <= 0.75 + 1e-12);
    }

    #[test]
    fn single_class_training_yields_flagged_constant_model() {
        let ds = dataset(
            vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            vec![Category::Pool, Category::Pool],
            false,
        );
        for kind in ModelKind::ALL {
            let model = train(kind, &ds, &LearnConfig::default(), 0).unwrap();
            assert!(model.degenerate, "{kind} not flagged");
            let preds = predict(&model, &ds.features).unwrap();
            assert_eq!(preds, vec![Category::Pool, Category::Pool], "{kind}");
        }
    }
}
