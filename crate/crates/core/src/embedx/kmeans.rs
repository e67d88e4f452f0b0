use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::rng::sub_rng;

pub const RESTARTS: usize = 10;
const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centers: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    /// Within-cluster sum of squares.
    pub inertia: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterCurve {
    /// `(k, within-cluster SS / total SS)` in ascending `k`.
    pub points: Vec<(usize, f64)>,
}

impl ClusterCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,unexplained\n");
        for (k, u) in &self.points {
            out.push_str(&format!("{k},{u:.10}\n"));
        }
        out
    }

    pub fn value(&self, k: usize) -> Option<f64> {
        self.points.iter().find(|p| p.0 == k).map(|p| p.1)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Adds k-means++ centers to `centers` until there are `k` of them.
fn extend_plus_plus(m: &EmbeddingMatrix, centers: &mut Vec<Vec<f64>>, k: usize, rng: &mut ChaCha8Rng) {
    if centers.is_empty() {
        centers.push(m.row(rng.random_range(0..m.rows)).to_vec());
    }
    let mut dist: Vec<f64> = (0..m.rows).map(|r| nearest(m.row(r), centers).1).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = m.rows - 1;
            for (i, &d) in dist.iter().enumerate() {
                if u < d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            // every point already coincides with a center
            rng.random_range(0..m.rows)
        };
        let c = m.row(pick).to_vec();
        for (r, d) in dist.iter_mut().enumerate() {
            *d = d.min(sq_dist(m.row(r), &c));
        }
        centers.push(c);
    }
}

/// Lloyd iterations from the given centers. Empty clusters keep their
/// center, so the inertia never increases.
fn lloyd(m: &EmbeddingMatrix, mut centers: Vec<Vec<f64>>) -> KMeansFit {
    let k = centers.len();
    let mut assignment = vec![usize::MAX; m.rows];
    let mut inertia = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        let mut new_inertia = 0.0;
        for (r, slot) in assignment.iter_mut().enumerate() {
            let (c, d) = nearest(m.row(r), &centers);
            if *slot != c {
                *slot = c;
                changed = true;
            }
            new_inertia += d;
        }
        inertia = new_inertia;
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; m.cols]; k];
        let mut counts = vec![0usize; k];
        for (r, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            for (s, &x) in sums[c].iter_mut().zip(m.row(r)) {
                *s += x;
            }
        }
        for ((center, sum), &n) in centers.iter_mut().zip(sums).zip(&counts) {
            if n > 0 {
                *center = sum.into_iter().map(|s| s / n as f64).collect();
            }
        }
    }
    KMeansFit {
        centers,
        assignment,
        inertia,
    }
}

/// Best of [`RESTARTS`] k-means++ runs; ties go to the earliest restart.
/// `warm` centers, when given, seed one extra run extended to `k` centers.
pub fn kmeans(m: &EmbeddingMatrix, k: usize, seed: u64, warm: Option<&[Vec<f64>]>) -> Result<KMeansFit> {
    if k == 0 || k > m.rows {
        return Err(Error::config(format!("k = {k} outside 1..={}", m.rows)));
    }
    let mut best: Option<KMeansFit> = None;
    let mut consider = |fit: KMeansFit| {
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    };
    for restart in 0..RESTARTS {
        let mut rng = sub_rng(seed, &format!("kmeans/{k}/{restart}"));
        let mut centers = Vec::with_capacity(k);
        extend_plus_plus(m, &mut centers, k, &mut rng);
        consider(lloyd(m, centers));
    }
    if let Some(w) = warm.filter(|w| w.len() <= k) {
        let mut rng = sub_rng(seed, &format!("kmeans/{k}/warm"));
        let mut centers = w.to_vec();
        extend_plus_plus(m, &mut centers, k, &mut rng);
        consider(lloyd(m, centers));
    }
    Ok(best.expect("at least one restart"))
}

/// Unexplained variance for each `k`. Values are computed in ascending `k`,
/// each warm-started from the best centers of the previous one, so the curve
/// never increases.
pub fn cluster_curve(m: &EmbeddingMatrix, k_values: &[usize], seed: u64) -> Result<ClusterCurve> {
    let mut ks = k_values.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > m.rows) {
        return Err(Error::config(format!("k = {k} outside 1..={}", m.rows)));
    }
    let total = m.total_variance();
    let mut points = Vec::with_capacity(ks.len());
    let mut prev: Option<KMeansFit> = None;
    for k in ks {
        let ratio = if k == 1 {
            1.0
        } else if total == 0.0 {
            0.0
        } else {
            let fit = kmeans(m, k, seed, prev.as_ref().map(|f| f.centers.as_slice()))?;
            let r = (fit.inertia / total).clamp(0.0, 1.0);
            prev = Some(fit);
            r
        };
        if k == 1 {
            prev = Some(KMeansFit {
                centers: vec![m.column_means()],
                assignment: vec![0; m.rows],
                inertia: total,
            });
        }
        points.push((k, ratio));
    }
    Ok(ClusterCurve { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand_distr::{Distribution, Normal};

    fn blobs(n: usize, sep: f64, seed: u64) -> EmbeddingMatrix {
        let mut rng = rng_from_seed(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut data = Vec::new();
        for i in 0..n {
            let offset = if i % 2 == 0 { sep } else { -sep };
            data.push(offset + noise.sample(&mut rng));
            data.push(noise.sample(&mut rng));
        }
        EmbeddingMatrix::new(n, 2, data).unwrap()
    }

    #[test]
    fn endpoints_are_exact() {
        let m = blobs(30, 1.0, 0);
        let c = cluster_curve(&m, &[30, 1, 5], 3).unwrap();
        assert_eq!(c.points[0], (1, 1.0));
        assert_eq!(c.points[2], (30, 0.0));
        assert!(c.points.windows(2).all(|w| w[1].1 <= w[0].1));
    }

    #[test]
    fn separated_blobs_need_two_clusters() {
        let m = blobs(200, 10.0, 1);
        let c = cluster_curve(&m, &[1, 2], 0).unwrap();
        assert!(c.value(2).unwrap() < 0.05);
    }

    #[test]
    fn deterministic_and_k_checked() {
        let m = blobs(40, 2.0, 2);
        let ks: Vec<usize> = (1..=40).collect();
        let a = cluster_curve(&m, &ks, 9).unwrap();
        assert_eq!(a, cluster_curve(&m, &ks, 9).unwrap());
        assert!(a.points.windows(2).all(|w| w[1].1 <= w[0].1));
        assert!(matches!(cluster_curve(&m, &[41], 0), Err(Error::Config(_))));
        assert!(kmeans(&m, 0, 0, None).is_err());
    }

    #[test]
    fn duplicate_rows_still_reach_zero() {
        let m = EmbeddingMatrix::new(4, 1, vec![1.0, 1.0, 2.0, 3.0]).unwrap();
        let c = cluster_curve(&m, &[3, 4], 0).unwrap();
        assert_eq!(c.points, vec![(3, 0.0), (4, 0.0)]);
    }
}
