//! Learning-layer properties: exact weight identities, metric equivalences,
//! fold-plan laws, and the scaling invariance of tree-family training.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use txhist_core::learn::{
    evaluate, predict, sample_weights, stratified_kfold, train, Dataset, LearnConfig, Matrix,
    ModelKind,
};
use txhist_core::model::Category;

fn random_labels(rng: &mut ChaCha8Rng, n: usize, classes: usize) -> Vec<Category> {
    (0..n)
        .map(|_| Category::from_ordinal(rng.gen_range(0..classes)).unwrap())
        .collect()
}

#[test]
fn weight_sum_equals_sample_count_in_exact_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xe96);
    for _ in 0..120 {
        let n = rng.gen_range(1..=200usize);
        let classes = rng.gen_range(1..=7usize);
        let labels = random_labels(&mut rng, n, classes);

        // exact mirror of the weight formula: w_i = (1/C) / (n_c / N)
        let mut counts = [0i64; 7];
        for c in &labels {
            counts[c.ordinal()] += 1;
        }
        let c_present = counts.iter().filter(|&&x| x > 0).count() as i64;
        let big_n = BigInt::from(n as i64);
        let mut sum = BigRational::zero();
        for cat in &labels {
            let n_c = BigInt::from(counts[cat.ordinal()]);
            let w = BigRational::new(big_n.clone(), BigInt::from(c_present) * n_c);
            sum += w;
        }
        assert_eq!(sum, BigRational::from(big_n.clone()), "exact identity failed");

        // and the f64 implementation matches the exact values
        let w = sample_weights(&labels).unwrap();
        for (i, cat) in labels.iter().enumerate() {
            let exact = BigRational::new(
                big_n.clone(),
                BigInt::from(c_present) * BigInt::from(counts[cat.ordinal()]),
            );
            let exact_f = exact.to_f64().unwrap();
            assert!((w[i] - exact_f).abs() <= 1e-12 * exact_f.max(1.0));
        }
    }
}

proptest! {
    #[test]
    fn micro_f1_equals_accuracy(
        pairs in prop::collection::vec((0usize..7, 0usize..7), 1..300),
    ) {
        let truths: Vec<Category> = pairs.iter().map(|(t, _)| Category::from_ordinal(*t).unwrap()).collect();
        let preds: Vec<Category> = pairs.iter().map(|(_, p)| Category::from_ordinal(*p).unwrap()).collect();
        let metrics = evaluate(&preds, &truths).unwrap();
        // independent accuracy computation
        let hits = pairs.iter().filter(|(t, p)| t == p).count();
        let accuracy = hits as f64 / pairs.len() as f64;
        prop_assert!((metrics.micro_f1 - accuracy).abs() < 1e-12);
    }

    #[test]
    fn fold_plans_partition_all_indices(
        n in 4usize..120,
        k in 2usize..8,
        seed in 0u64..1000,
    ) {
        prop_assume!(k <= n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = random_labels(&mut rng, n, 7);
        let plan = stratified_kfold(&labels, k, seed).unwrap();
        prop_assert_eq!(plan.folds.len(), k);

        let mut all: Vec<usize> = plan.folds.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());

        // stratification: per-category fold counts differ by at most one
        for cat in Category::ALL {
            let per_fold: Vec<usize> = plan
                .folds
                .iter()
                .map(|f| f.iter().filter(|&&i| labels[i] == cat).count())
                .collect();
            let lo = per_fold.iter().min().unwrap();
            let hi = per_fold.iter().max().unwrap();
            prop_assert!(hi - lo <= 1, "category {cat} spread {per_fold:?}");
        }
    }
}

#[test]
fn tree_family_training_is_scale_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5ca1e);
    for round in 0..8 {
        let n = 60;
        let d = 5;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-10.0..10.0)).collect())
            .collect();
        let labels: Vec<Category> = (0..n)
            .map(|i| Category::from_ordinal(i % 4).unwrap())
            .collect();
        let scales: Vec<f64> = (0..d).map(|_| rng.gen_range(0.1..50.0)).collect();
        let scaled_rows: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().zip(&scales).map(|(v, s)| v * s).collect())
            .collect();
        let names: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
        let make = |rows: Vec<Vec<f64>>| {
            Dataset::new(
                (0..n).map(|i| format!("s{i}")).collect(),
                Matrix::from_rows(rows).unwrap(),
                labels.clone(),
                None,
                names.clone(),
            )
            .unwrap()
        };
        let base = make(rows);
        let scaled = make(scaled_rows);

        let mut cfg = LearnConfig::default();
        cfg.forest.n_trees = 15;
        cfg.gbt.rounds = 5;
        cfg.gbt.max_depth = 3;

        for kind in [ModelKind::DecisionTree, ModelKind::RandomForest, ModelKind::Gbt] {
            let m1 = train(kind, &base, &cfg, round as u64).unwrap();
            let m2 = train(kind, &scaled, &cfg, round as u64).unwrap();
            let p1 = predict(&m1, &base.features).unwrap();
            let p2 = predict(&m2, &scaled.features).unwrap();
            assert_eq!(p1, p2, "{kind} predictions changed under column rescaling");
        }
    }
}

#[test]
fn predict_rejects_column_mismatch() {
    let ds = Dataset::new(
        vec!["a".into(), "b".into()],
        Matrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
        vec![Category::Exchange, Category::Mixer],
        None,
        vec!["f0".into(), "f1".into()],
    )
    .unwrap();
    let model = train(ModelKind::DecisionTree, &ds, &LearnConfig::default(), 0).unwrap();
    let wrong = Matrix::from_rows(vec![vec![0.0, 1.0, 2.0]]).unwrap();
    assert!(predict(&model, &wrong).is_err());
}

#[test]
fn importance_errors_for_linear_models() {
    let ds = Dataset::new(
        vec!["a".into(), "b".into(), "c".into(), "d".into()],
        Matrix::from_rows(vec![
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![0.1, 0.9],
            vec![0.9, 0.1],
        ])
        .unwrap(),
        vec![
            Category::Exchange,
            Category::Mixer,
            Category::Exchange,
            Category::Mixer,
        ],
        None,
        vec!["f0".into(), "f1".into()],
    )
    .unwrap();
    let model = train(ModelKind::Logistic, &ds, &LearnConfig::default(), 0).unwrap();
    assert!(txhist_core::learn::feature_importance(&model).is_err());
}
