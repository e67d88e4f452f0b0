use langtransfer::embedx::EmbeddingMatrix;
use langtransfer::probes::{fit_logistic, fit_ridge, probe_suite, roc_auc, split, Metric, ProbeConfig};
use langtransfer::textcorpus::FeatureTable;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rows: usize, cols: usize, seed: u64) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
    EmbeddingMatrix::new(rows, cols, data).unwrap()
}

fn labels_from_first_column(x: &EmbeddingMatrix, noise: f64, seed: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..x.rows).map(|r| x.row(r)[0] + noise * rng.random::<f64>() > 0.0).collect()
}

proptest! {
    #[test]
    fn negated_scores_give_complementary_auc(
        pairs in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 2..80)
    ) {
        let scores: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let labels: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let a = roc_auc(&scores, &labels).unwrap();
        let b = roc_auc(&neg, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn splits_partition_the_rows(n in 10usize..300, frac in 0.5f64..0.9, seed in any::<u64>()) {
        let s = split(n, frac, seed, None).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(s.clone(), split(n, frac, seed, None).unwrap());
    }

    #[test]
    fn ridge_r2_never_exceeds_one(seed in any::<u64>(), lambda in 1e-6f64..10.0) {
        let x = gaussian(60, 3, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 5);
        let y: Vec<f64> = (0..60).map(|_| rng.random::<f64>()).collect();
        let fit = fit_ridge(&x, &y, &split(60, 0.8, seed, None).unwrap(), lambda).unwrap();
        prop_assert!(fit.r2 <= 1.0);
    }
}

#[test]
fn permuting_test_labels_leaves_training_untouched() {
    let x = gaussian(400, 5, 1);
    let y = labels_from_first_column(&x, 1.0, 2);
    let s = split(400, 0.8, 3, Some(&y)).unwrap();
    let a = fit_logistic(&x, &y, &s, 1e-4).unwrap();
    let mut shuffled = y.clone();
    let mut test_labels: Vec<bool> = s.test.iter().map(|&i| y[i]).collect();
    test_labels.shuffle(&mut ChaCha8Rng::seed_from_u64(4));
    for (&i, &l) in s.test.iter().zip(&test_labels) {
        shuffled[i] = l;
    }
    let b = fit_logistic(&x, &shuffled, &s, 1e-4).unwrap();
    assert_eq!(a.weights, b.weights);
    assert_eq!(a.bias, b.bias);
    assert_eq!((a.n_train, a.n_test), (320, 80));
}

#[test]
fn fits_are_deterministic() {
    let x = gaussian(200, 4, 7);
    let y = labels_from_first_column(&x, 2.0, 8);
    let s = split(200, 0.8, 9, Some(&y)).unwrap();
    assert_eq!(fit_logistic(&x, &y, &s, 1e-3).unwrap(), fit_logistic(&x, &y, &s, 1e-3).unwrap());
    let t: Vec<f64> = (0..200).map(|r| x.row(r)[1]).collect();
    let s = split(200, 0.8, 9, None).unwrap();
    assert_eq!(fit_ridge(&x, &t, &s, 1.0).unwrap(), fit_ridge(&x, &t, &s, 1.0).unwrap());
}

#[test]
fn stratified_split_keeps_both_classes_on_each_side() {
    let labels: Vec<bool> = (0..50).map(|i| i < 5).collect();
    let s = split(50, 0.8, 0, Some(&labels)).unwrap();
    assert_eq!(s.train.iter().filter(|&&i| labels[i]).count(), 4);
    assert_eq!(s.test.iter().filter(|&&i| labels[i]).count(), 1);
}

#[test]
fn single_class_is_an_input_error() {
    let x = gaussian(40, 2, 0);
    let y = vec![true; 40];
    let s = split(40, 0.8, 0, None).unwrap();
    assert!(fit_logistic(&x, &y, &s, 1e-4).is_err());
    assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
}

#[test]
fn suite_skips_special_rows_and_sorts_features() {
    let n = 102;
    let x = gaussian(n, 6, 11);
    let tokens: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let frequency: Vec<u64> = (0..n).map(|i| if i < 2 { 0 } else { rng.random_range(1..1000) }).collect();
    let starts_with_space = labels_from_first_column(&x, 0.5, 13);
    let mut external = std::collections::BTreeMap::new();
    external.insert("aa_noun".to_string(), labels_from_first_column(&x, 3.0, 14));
    external.insert("zz_never".to_string(), vec![false; n]);
    let table = FeatureTable {
        tokens,
        frequency,
        starts_with_space,
        external,
    };
    let report = probe_suite(&x, &table, &ProbeConfig::default()).unwrap();
    let names: Vec<&str> = report.results.iter().map(|r| r.feature.as_str()).collect();
    assert_eq!(names, vec!["aa_noun", "frequency", "starts_with_space"]);
    assert_eq!(report.skipped.len(), 1);
    assert_eq!(report.skipped[0].0, "zz_never");
    assert!(report.results.iter().all(|r| r.n_train + r.n_test == n - 2));
    assert_eq!(report.results[1].metric, Metric::R2);
    let mean = report.results.iter().map(|r| r.value).sum::<f64>() / 3.0;
    assert!((report.average.unwrap() - mean).abs() < 1e-12);
    assert!(report.to_csv().lines().last().unwrap().starts_with("average,mean,"));
}
