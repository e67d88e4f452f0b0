//! Linear probes from token embeddings to token features.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::embedx::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::rng::sub_rng;
use crate::textcorpus::{FeatureTable, Vocab};

pub const DEFAULT_RIDGE_LAMBDA: f64 = 1.0;
pub const DEFAULT_LOGISTIC_L2: f64 = 1e-4;
const LOGISTIC_TOLERANCE: f64 = 1e-6;
const LOGISTIC_MAX_ITERATIONS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn take_fraction(mut ids: Vec<usize>, fraction: f64, rng: &mut impl rand::Rng) -> (Vec<usize>, Vec<usize>) {
    ids.shuffle(rng);
    let cut = (ids.len() as f64 * fraction).round() as usize;
    let test = ids.split_off(cut);
    (ids, test)
}

/// Deterministic train/test split of `0..n`. With labels the split is
/// stratified: each class is divided separately.
pub fn split(n: usize, train_fraction: f64, seed: u64, labels: Option<&[bool]>) -> Result<Split> {
    if n < 10 {
        return Err(Error::config(format!("need at least 10 items to split, got {n}")));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let mut rng = sub_rng(seed, "probe-split");
    let (mut train, mut test) = match labels {
        None => take_fraction((0..n).collect(), train_fraction, &mut rng),
        Some(y) => {
            if y.len() != n {
                return Err(Error::input("label count differs from item count"));
            }
            let (pos, neg): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| y[i]);
            let (mut tr, mut te) = take_fraction(pos, train_fraction, &mut rng);
            let (tr2, te2) = take_fraction(neg, train_fraction, &mut rng);
            tr.extend(tr2);
            te.extend(te2);
            (tr, te)
        }
    };
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

/// Per-column mean and standard deviation over `rows`; constant columns get 1.
fn standardizer(x: &EmbeddingMatrix, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; x.cols];
    for &r in rows {
        for (m, &v) in mean.iter_mut().zip(x.row(r)) {
            *m += v / n;
        }
    }
    let mut sd = vec![0.0; x.cols];
    for &r in rows {
        for ((s, &v), m) in sd.iter_mut().zip(x.row(r)).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    for s in &mut sd {
        *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
    }
    (mean, sd)
}

fn design(x: &EmbeddingMatrix, rows: &[usize], mean: &[f64], sd: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.cols, |i, j| (x.row(rows[i])[j] - mean[j]) / sd[j])
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub r2: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Closed-form ridge regression on z-scored inputs with an unpenalized
/// intercept; R² on the test rows.
pub fn fit_ridge(x: &EmbeddingMatrix, y: &[f64], split: &Split, lambda: f64) -> Result<RidgeFit> {
    if y.len() != x.rows {
        return Err(Error::input("target length differs from embedding rows"));
    }
    if split.train.is_empty() || split.test.is_empty() || lambda < 0.0 {
        return Err(Error::config("ridge needs non-empty splits and lambda >= 0"));
    }
    let (mean, sd) = standardizer(x, &split.train);
    let xt = design(x, &split.train, &mean, &sd);
    let y_mean = split.train.iter().map(|&i| y[i]).sum::<f64>() / split.train.len() as f64;
    let yt = DVector::from_iterator(split.train.len(), split.train.iter().map(|&i| y[i] - y_mean));
    let mut gram = xt.transpose() * &xt;
    for j in 0..x.cols {
        gram[(j, j)] += lambda;
    }
    let rhs = xt.transpose() * yt;
    let w = match gram.clone().cholesky() {
        Some(c) => c.solve(&rhs),
        None => gram
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("ridge normal equations are singular".into()))?,
    };
    let xs = design(x, &split.test, &mean, &sd);
    let pred = xs * &w;
    let test_y: Vec<f64> = split.test.iter().map(|&i| y[i]).collect();
    let test_mean = test_y.iter().sum::<f64>() / test_y.len() as f64;
    let ss_res: f64 = test_y.iter().zip(pred.iter()).map(|(t, p)| (t - (p + y_mean)).powi(2)).sum();
    let ss_tot: f64 = test_y.iter().map(|t| (t - test_mean).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 0.0 };
    Ok(RidgeFit {
        weights: w.iter().copied().collect(),
        intercept: y_mean,
        r2,
        n_train: split.train.len(),
        n_test: split.test.len(),
    })
}

/// Area under the ROC curve via the rank-sum statistic; tied scores share
/// their average rank.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::input("scores and labels differ in length"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::input("ROC-AUC needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| labels[k]).count() as f64 * avg_rank;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub auc: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n_train: usize,
    pub n_test: usize,
}

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn logistic_loss(x: &DMatrix<f64>, y: &[f64], w: &DVector<f64>, b: f64, l2: f64) -> f64 {
    let z = x * w;
    let n = y.len() as f64;
    let data: f64 = z.iter().zip(y).map(|(&z, &t)| log1p_exp(z + b) - t * (z + b)).sum::<f64>() / n;
    data + 0.5 * l2 * w.norm_squared()
}

/// L2-regularized logistic regression by gradient descent with backtracking
/// line search, stopped when the loss changes by less than 1e-6.
pub fn fit_logistic(x: &EmbeddingMatrix, y: &[bool], split: &Split, l2: f64) -> Result<LogisticFit> {
    if y.len() != x.rows {
        return Err(Error::input("label length differs from embedding rows"));
    }
    let has_both = |ids: &[usize]| ids.iter().any(|&i| y[i]) && ids.iter().any(|&i| !y[i]);
    if !has_both(&split.train) {
        return Err(Error::input("training split has a single class"));
    }
    if !has_both(&split.test) {
        return Err(Error::input("test split has a single class"));
    }
    let (mean, sd) = standardizer(x, &split.train);
    let xt = design(x, &split.train, &mean, &sd);
    let yt: Vec<f64> = split.train.iter().map(|&i| if y[i] { 1.0 } else { 0.0 }).collect();
    let n = yt.len() as f64;
    let mut w = DVector::zeros(x.cols);
    let mut b = 0.0;
    let mut loss = logistic_loss(&xt, &yt, &w, b, l2);
    let mut step = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < LOGISTIC_MAX_ITERATIONS {
        iterations += 1;
        let z = &xt * &w;
        let resid = DVector::from_iterator(
            yt.len(),
            z.iter().zip(&yt).map(|(&z, &t)| 1.0 / (1.0 + (-(z + b)).exp()) - t),
        );
        let gw = xt.transpose() * &resid / n + &w * l2;
        let gb = resid.sum() / n;
        let gnorm2 = gw.norm_squared() + gb * gb;
        // Armijo backtracking
        let (mut nw, mut nb, mut nloss);
        loop {
            nw = &w - &gw * step;
            nb = b - gb * step;
            nloss = logistic_loss(&xt, &yt, &nw, nb, l2);
            if nloss <= loss - 0.5 * step * gnorm2 || step < 1e-12 {
                break;
            }
            step *= 0.5;
        }
        let delta = loss - nloss;
        w = nw;
        b = nb;
        loss = nloss;
        step = (step * 2.0).min(64.0);
        if delta.abs() < LOGISTIC_TOLERANCE {
            converged = true;
            break;
        }
    }
    let xs = design(x, &split.test, &mean, &sd);
    let scores: Vec<f64> = (xs * &w).iter().map(|s| s + b).collect();
    let labels: Vec<bool> = split.test.iter().map(|&i| y[i]).collect();
    Ok(LogisticFit {
        auc: roc_auc(&scores, &labels)?,
        weights: w.iter().copied().collect(),
        bias: b,
        iterations,
        converged,
        n_train: split.train.len(),
        n_test: split.test.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    R2,
    RocAuc,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::R2 => "r2",
            Metric::RocAuc => "roc_auc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub feature: String,
    pub metric: Metric,
    pub value: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub regularization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub ridge_lambda: f64,
    pub logistic_l2: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            ridge_lambda: DEFAULT_RIDGE_LAMBDA,
            logistic_l2: DEFAULT_LOGISTIC_L2,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub results: Vec<ProbeResult>,
    /// Features that could not be probed, with the reason.
    pub skipped: Vec<(String, String)>,
    pub average: Option<f64>,
    pub config: ProbeConfig,
}

impl ProbeReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,metric,value,n_train,n_test\n");
        for r in &self.results {
            let _ = writeln!(
                out,
                "{},{},{:.6},{},{}",
                r.feature,
                r.metric.name(),
                r.value,
                r.n_train,
                r.n_test
            );
        }
        if let Some(a) = self.average {
            let _ = writeln!(out, "average,mean,{a:.6},,");
        }
        out
    }
}

/// Probes every feature of `table` from the embedding rows of the regular
/// (non-special) tokens: ridge R² for log frequency, logistic ROC-AUC for the
/// boolean features.
pub fn probe_suite(embeddings: &EmbeddingMatrix, table: &FeatureTable, config: &ProbeConfig) -> Result<ProbeReport> {
    if embeddings.rows != table.len() {
        return Err(Error::config(format!(
            "{} embedding rows but {} feature rows",
            embeddings.rows,
            table.len()
        )));
    }
    let ids: Vec<usize> = (0..table.len()).filter(|&i| !Vocab::is_special(i as u16)).collect();
    let x = embeddings.select_rows(|r| !Vocab::is_special(r as u16))?;
    let mut results = Vec::new();
    let mut skipped = Vec::new();

    let log_freq: Vec<f64> = ids.iter().map(|&i| (table.frequency[i] as f64 + 1.0).ln()).collect();
    let mu = log_freq.iter().sum::<f64>() / log_freq.len() as f64;
    let sd = (log_freq.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / log_freq.len() as f64).sqrt();
    let freq_z: Vec<f64> = log_freq.iter().map(|v| if sd > 0.0 { (v - mu) / sd } else { 0.0 }).collect();
    let freq = split(ids.len(), config.train_fraction, config.seed, None)
        .and_then(|s| fit_ridge(&x, &freq_z, &s, config.ridge_lambda));
    match freq {
        Ok(f) => results.push(ProbeResult {
            feature: "frequency".into(),
            metric: Metric::R2,
            value: f.r2,
            n_train: f.n_train,
            n_test: f.n_test,
            regularization: config.ridge_lambda,
        }),
        Err(e) => skipped.push(("frequency".into(), e.to_string())),
    }

    for (name, column) in table.boolean_features() {
        let y: Vec<bool> = ids.iter().map(|&i| column[i]).collect();
        let fit = split(y.len(), config.train_fraction, config.seed, Some(&y))
            .and_then(|s| fit_logistic(&x, &y, &s, config.logistic_l2));
        match fit {
            Ok(f) => results.push(ProbeResult {
                feature: name.to_string(),
                metric: Metric::RocAuc,
                value: f.auc,
                n_train: f.n_train,
                n_test: f.n_test,
                regularization: config.logistic_l2,
            }),
            Err(e) => skipped.push((name.to_string(), e.to_string())),
        }
    }
    results.sort_by(|a, b| a.feature.cmp(&b.feature));
    let average = (!results.is_empty()).then(|| results.iter().map(|r| r.value).sum::<f64>() / results.len() as f64);
    Ok(ProbeReport {
        results,
        skipped,
        average,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn gaussian(n: usize, d: usize, seed: u64) -> EmbeddingMatrix {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rng_from_seed(seed);
        EmbeddingMatrix::new(n, d, (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let s = split(10, 0.8, 1, None).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (8, 2));
        assert_eq!(s, split(10, 0.8, 1, None).unwrap());
        assert!(split(9, 0.8, 1, None).is_err());
    }

    #[test]
    fn stratified_split_keeps_ratio() {
        let y: Vec<bool> = (0..103).map(|i| i % 4 == 0).collect();
        let s = split(103, 0.8, 5, Some(&y)).unwrap();
        let pos_train = s.train.iter().filter(|&&i| y[i]).count() as f64;
        let expected = 0.8 * y.iter().filter(|&&b| b).count() as f64;
        assert!((pos_train - expected).abs() <= 1.0);
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
    }

    #[test]
    fn auc_by_hand() {
        assert_eq!(roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(), 0.75);
        assert_eq!(roc_auc(&[1.0, 1.0], &[true, false]).unwrap(), 0.5);
        let s = [0.3, -1.0, 2.0, 0.1, 0.1];
        let l = [true, false, true, false, true];
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        assert!((roc_auc(&s, &l).unwrap() + roc_auc(&neg, &l).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ridge_recovers_linear_target() {
        let x = gaussian(300, 8, 1);
        let w: Vec<f64> = (0..8).map(|i| i as f64 - 3.5).collect();
        let y: Vec<f64> = (0..300).map(|r| x.row(r).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + 2.0).collect();
        let s = split(300, 0.8, 0, None).unwrap();
        let f = fit_ridge(&x, &y, &s, 1e-8).unwrap();
        assert!(f.r2 > 1.0 - 1e-6);
    }

    #[test]
    fn logistic_separates_separable_data() {
        let x = gaussian(400, 4, 2);
        let y: Vec<bool> = (0..400).map(|r| x.row(r)[0] + 0.5 * x.row(r)[2] > 0.0).collect();
        let s = split(400, 0.8, 0, Some(&y)).unwrap();
        let f = fit_logistic(&x, &y, &s, 1e-4).unwrap();
        assert_eq!(f.auc, 1.0);
        let single = vec![true; 400];
        assert!(fit_logistic(&x, &single, &s, 1e-4).is_err());
    }

    #[test]
    fn test_labels_do_not_leak_into_training() {
        let x = gaussian(200, 3, 3);
        let mut rng = rng_from_seed(4);
        let y: Vec<bool> = (0..200).map(|r| x.row(r)[1] + rng.random::<f64>() > 0.5).collect();
        let s = split(200, 0.8, 0, Some(&y)).unwrap();
        let a = fit_logistic(&x, &y, &s, 1e-4).unwrap();
        let mut shuffled = y.clone();
        let test_labels: Vec<bool> = s.test.iter().rev().map(|&i| y[i]).collect();
        for (&i, &l) in s.test.iter().zip(&test_labels) {
            shuffled[i] = l;
        }
        let b = fit_logistic(&x, &shuffled, &s, 1e-4).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.bias, b.bias);
    }

    #[test]
    fn suite_reports_average_and_skips() {
        use std::collections::BTreeMap;
        let n = 60;
        let x = gaussian(n, 4, 5);
        let tokens: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
        let mut external = BTreeMap::new();
        external.insert("never".to_string(), vec![false; n]);
        let table = FeatureTable {
            tokens,
            frequency: (0..n as u64).collect(),
            starts_with_space: (0..n).map(|i| x.row(i)[0] > 0.0).collect(),
            external,
        };
        let r = probe_suite(&x, &table, &ProbeConfig::default()).unwrap();
        assert_eq!(r.results.len(), 2);
        assert_eq!(r.skipped.len(), 1);
        assert_eq!(r.results[0].feature, "frequency");
        assert_eq!(r.results[0].metric, Metric::R2);
        let mean = (r.results[0].value + r.results[1].value) / 2.0;
        assert_eq!(r.average, Some(mean));
        assert_eq!(r.to_csv().lines().count(), 4);
    }
}
