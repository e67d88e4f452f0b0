//! Geometry of learned embeddings: the singular spectrum of the
//! mean-centered matrix and the k-means unexplained-variance curve.

mod kmeans;
mod plot;

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use kmeans::{cluster_curve, kmeans, ClusterCurve, KMeansFit, RESTARTS};
pub use plot::{render_line_plot, save_png, Series};

use crate::error::{Error, Result};
use crate::model::{ModelParams, INPUT_EMBEDDING, OUTPUT_EMBEDDING};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    #[default]
    Input,
    Output,
}

impl std::str::FromStr for EmbeddingSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "input" => Ok(EmbeddingSource::Input),
            "output" => Ok(EmbeddingSource::Output),
            _ => Err(Error::config(format!("unknown embedding source {s:?}"))),
        }
    }
}

/// Row-major `n_tokens x d` matrix, one row per token.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows < 2 || cols == 0 {
            return Err(Error::input(format!("embedding matrix {rows}x{cols} needs at least two rows")));
        }
        if data.len() != rows * cols {
            return Err(Error::input("embedding data does not match its shape"));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("embedding matrix has non-finite entries".into()));
        }
        Ok(EmbeddingMatrix { rows, cols, data })
    }

    /// Token embeddings of a model; output embeddings are transposed to
    /// one row per token. A tied model returns its input embeddings for both.
    pub fn from_params(params: &ModelParams, source: EmbeddingSource) -> Result<Self> {
        let d = params.config.d_model;
        let v = params.config.vocab_size;
        let data: Vec<f64> = match (source, params.get(OUTPUT_EMBEDDING)) {
            (EmbeddingSource::Output, Some(out)) => {
                let mut t = vec![0.0; v * d];
                for i in 0..d {
                    for j in 0..v {
                        t[j * d + i] = out.data[i * v + j] as f64;
                    }
                }
                t
            }
            _ => params
                .get(INPUT_EMBEDDING)
                .expect("input embedding always present")
                .data
                .iter()
                .map(|&x| x as f64)
                .collect(),
        };
        Self::new(v, d, data)
    }

    /// Keeps the rows whose index satisfies `keep`.
    pub fn select_rows(&self, keep: impl Fn(usize) -> bool) -> Result<Self> {
        let data = (0..self.rows)
            .filter(|&r| keep(r))
            .flat_map(|r| self.row(r).iter().copied())
            .collect::<Vec<_>>();
        Self::new(data.len() / self.cols, self.cols, data)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (acc, &x) in m.iter_mut().zip(self.row(r)) {
                *acc += x;
            }
        }
        m.iter_mut().for_each(|x| *x /= self.rows as f64);
        m
    }

    pub fn centered(&self) -> Self {
        let means = self.column_means();
        let mut data = self.data.clone();
        for row in data.chunks_mut(self.cols) {
            for (x, m) in row.iter_mut().zip(&means) {
                *x -= m;
            }
        }
        EmbeddingMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Sum of squared deviations from the column means.
    pub fn total_variance(&self) -> f64 {
        self.centered().data.iter().map(|x| x * x).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub source: EmbeddingSource,
    /// Descending singular values of the centered matrix.
    pub singular_values: Vec<f64>,
    /// Fraction of the total centered variance captured by the first `r + 1` values.
    pub cumulative_explained: Vec<f64>,
    pub total_variance: f64,
}

impl SpectrumReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,sigma,cum_var\n");
        for (i, (s, c)) in self.singular_values.iter().zip(&self.cumulative_explained).enumerate() {
            let _ = writeln!(out, "{},{s:.10e},{c:.10}", i + 1);
        }
        out
    }

    /// Explained-variance fraction of the leading `r` directions.
    pub fn explained_by(&self, r: usize) -> f64 {
        match r {
            0 => 0.0,
            r => self.cumulative_explained[r.min(self.cumulative_explained.len()) - 1],
        }
    }
}

/// Singular values of the column-centered matrix, largest first.
pub fn spectrum(matrix: &EmbeddingMatrix, source: EmbeddingSource) -> SpectrumReport {
    let c = matrix.centered();
    let m = DMatrix::from_row_slice(c.rows, c.cols, &c.data);
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let squares: Vec<f64> = sv.iter().map(|s| s * s).collect();
    let total: f64 = squares.iter().sum();
    let mut acc = 0.0;
    let cumulative_explained = squares
        .iter()
        .map(|s| {
            acc += s;
            if total > 0.0 {
                acc / total
            } else {
                0.0
            }
        })
        .collect();
    SpectrumReport {
        source,
        singular_values: sv,
        cumulative_explained,
        total_variance: c.data.iter().map(|x| x * x).sum(),
    }
}

/// Named spectra or cluster curves of several models, aligned for plotting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub kind: String,
    pub series: Vec<Series>,
}

impl Comparison {
    /// Long-format CSV: `model,x,y`.
    pub fn to_csv(&self) -> String {
        let (xh, yh) = if self.kind == "spectrum" {
            ("rank", "sigma_normalized")
        } else {
            ("k", "unexplained")
        };
        let mut out = format!("model,{xh},{yh}\n");
        for s in &self.series {
            for (x, y) in &s.points {
                let _ = writeln!(out, "{},{x},{y:.10}", s.name);
            }
        }
        out
    }
}

fn check_widths(models: &[(String, EmbeddingMatrix)]) -> Result<()> {
    if models.is_empty() {
        return Err(Error::config("nothing to compare"));
    }
    if models.iter().any(|(_, m)| m.cols != models[0].1.cols) {
        return Err(Error::config("compared embeddings must share their width"));
    }
    Ok(())
}

/// Spectra normalized by their leading singular value.
pub fn compare_spectra(models: &[(String, EmbeddingMatrix)]) -> Result<Comparison> {
    check_widths(models)?;
    let series = models
        .iter()
        .map(|(name, m)| {
            let s = spectrum(m, EmbeddingSource::Input);
            let top = s.singular_values.first().copied().unwrap_or(0.0);
            let points = s
                .singular_values
                .iter()
                .enumerate()
                .map(|(i, &v)| ((i + 1) as f64, if top > 0.0 { v / top } else { 0.0 }))
                .collect();
            Series {
                name: name.clone(),
                points,
            }
        })
        .collect();
    Ok(Comparison {
        kind: "spectrum".into(),
        series,
    })
}

pub fn compare_clusters(models: &[(String, EmbeddingMatrix)], k_values: &[usize], seed: u64) -> Result<Comparison> {
    check_widths(models)?;
    let series = models
        .iter()
        .map(|(name, m)| {
            let curve = cluster_curve(m, k_values, seed)?;
            Ok(Series {
                name: name.clone(),
                points: curve.points.iter().map(|&(k, u)| (k as f64, u)).collect(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(Comparison {
        kind: "clusters".into(),
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::rng::rng_from_seed;

    fn random(rows: usize, cols: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = rng_from_seed(seed);
        EmbeddingMatrix::new(rows, cols, (0..rows * cols).map(|_| rng.random::<f64>() - 0.5).collect()).unwrap()
    }

    #[test]
    fn identical_rows_have_zero_spectrum() {
        let m = EmbeddingMatrix::new(5, 3, [1.0, 2.0, 3.0].repeat(5)).unwrap();
        let s = spectrum(&m, EmbeddingSource::Input);
        assert!(s.singular_values.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn constructed_rank_two() {
        let mut rng = rng_from_seed(1);
        let u: Vec<f64> = (0..10).map(|_| rng.random::<f64>() - 0.5).collect();
        let v: Vec<f64> = (0..10).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut data = Vec::new();
        for _ in 0..40 {
            let (a, b) = (rng.random::<f64>(), rng.random::<f64>());
            data.extend(u.iter().zip(&v).map(|(x, y)| a * x + b * y));
        }
        let s = spectrum(&EmbeddingMatrix::new(40, 10, data).unwrap(), EmbeddingSource::Input);
        assert!(s.singular_values[..2].iter().all(|&x| x > 1e-6));
        assert!(s.singular_values[2..].iter().all(|&x| x < 1e-6));
    }

    #[test]
    fn frobenius_identity_and_sorted() {
        let m = random(30, 8, 2);
        let s = spectrum(&m, EmbeddingSource::Input);
        let sum: f64 = s.singular_values.iter().map(|x| x * x).sum();
        assert!((sum - s.total_variance).abs() / s.total_variance < 1e-10);
        assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
        assert!((s.cumulative_explained.last().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(s.to_csv().lines().count(), 9);
    }

    #[test]
    fn output_embeddings_are_transposed() {
        use crate::model::ModelConfig;
        let p = ModelParams::init(ModelConfig::desk(7, 4), 0).unwrap();
        let m = EmbeddingMatrix::from_params(&p, EmbeddingSource::Output).unwrap();
        assert_eq!((m.rows, m.cols), (7, 64));
        let out = p.get(OUTPUT_EMBEDDING).unwrap();
        assert_eq!(m.row(3)[5], out.data[5 * 7 + 3] as f64);
    }

    #[test]
    fn comparison_series_lengths() {
        let models = vec![("a".to_string(), random(20, 6, 1)), ("b".to_string(), random(9, 6, 2))];
        let c = compare_spectra(&models).unwrap();
        assert_eq!(c.series[0].points.len(), 6);
        assert_eq!(c.series[1].points.len(), 6);
        assert!(compare_spectra(&[("x".into(), random(5, 3, 0)), ("y".into(), random(5, 4, 0))]).is_err());
    }
}
