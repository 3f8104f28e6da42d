//! Bayesian logistic regression with a standard normal prior.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::Rng;

use crate::error::{Error, Result};
use crate::psdlin::SymMatrix;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log σ(z)` without overflow.
fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticDataset {
    features: DMatrix<f64>,
    labels: Vec<f64>,
    minibatch_size: usize,
}

impl LogisticDataset {
    pub fn new(features: DMatrix<f64>, labels: Vec<f64>, minibatch_size: usize) -> Result<Self> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::invalid(
                "dataset needs at least one row and one feature",
            ));
        }
        if features.nrows() != labels.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature rows must be finite"));
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
            return Err(Error::invalid(format!(
                "labels must be 0 or 1, found {bad}"
            )));
        }
        if minibatch_size == 0 {
            return Err(Error::invalid("minibatch size must be positive"));
        }
        Ok(LogisticDataset {
            features,
            labels,
            minibatch_size,
        })
    }

    /// Reads a headerless delimited file: feature columns followed by a 0/1 label.
    pub fn load(path: &Path, delimiter: u8, minibatch_size: usize) -> Result<Self> {
        let data_err = |message: String| Error::Data {
            path: path.to_path_buf(),
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .delimiter(delimiter)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                other => data_err(format!("{other:?}")),
            })?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| data_err(format!("row {}: {e}", line + 1)))?;
            let row = record
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| data_err(format!("row {}: {e}", line + 1)))?;
            if row.len() < 2 {
                return Err(data_err(format!(
                    "row {} needs at least one feature and a label",
                    line + 1
                )));
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(data_err("file has no rows".into()));
        }
        let width = rows[0].len();
        if let Some(i) = rows.iter().position(|r| r.len() != width) {
            return Err(data_err(format!(
                "row {} has {} columns, expected {width}",
                i + 1,
                rows[i].len()
            )));
        }
        let d = width - 1;
        let features = DMatrix::from_fn(rows.len(), d, |i, k| rows[i][k]);
        let labels = rows.iter().map(|r| r[d]).collect();
        Self::new(features, labels, minibatch_size).map_err(|e| data_err(e.to_string()))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn minibatch_size(&self) -> usize {
        self.minibatch_size
    }

    pub(crate) fn logit(&self, j: usize, theta: &[f64]) -> f64 {
        self.features
            .row(j)
            .iter()
            .zip(theta)
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// `p(θ | D) ∝ Π_j [y_j σ(θᵀx_j) + (1 − y_j) σ(−θᵀx_j)] · N(θ; 0, I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticPosterior {
    data: LogisticDataset,
}

impl LogisticPosterior {
    pub fn new(data: LogisticDataset) -> Self {
        LogisticPosterior { data }
    }

    pub fn data(&self) -> &LogisticDataset {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    /// `None` when the minibatch covers the whole dataset.
    pub fn draw_minibatch<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vec<usize>> {
        let n = self.data.len();
        let b = self.data.minibatch_size;
        if b >= n {
            return None;
        }
        let mut idx = sample_indices(rng, n, b).into_vec();
        idx.sort_unstable();
        Some(idx)
    }

    fn batch_scale(&self, batch: Option<&[usize]>) -> f64 {
        batch.map_or(1.0, |b| self.data.len() as f64 / b.len() as f64)
    }

    fn for_each_row(&self, batch: Option<&[usize]>, mut f: impl FnMut(usize)) {
        match batch {
            Some(b) => b.iter().for_each(|&j| f(j)),
            None => (0..self.data.len()).for_each(f),
        }
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        let mut ll = 0.0;
        for j in 0..self.data.len() {
            let z = self.data.logit(j, theta);
            ll += if self.data.labels[j] == 1.0 {
                log_sigmoid(z)
            } else {
                log_sigmoid(-z)
            };
        }
        ll - 0.5 * theta.iter().map(|t| t * t).sum::<f64>()
    }

    /// `(N/|B|) Σ_{j∈B} (y_j − σ(θᵀx_j)) x_j − θ`.
    pub fn grad(&self, theta: &[f64], batch: Option<&[usize]>) -> Vec<f64> {
        let d = self.dim();
        let mut g = vec![0.0; d];
        self.for_each_row(batch, |j| {
            let r = self.data.labels[j] - sigmoid(self.data.logit(j, theta));
            for (k, gk) in g.iter_mut().enumerate() {
                *gk += r * self.data.features[(j, k)];
            }
        });
        let scale = self.batch_scale(batch);
        g.iter_mut()
            .zip(theta)
            .for_each(|(gk, t)| *gk = scale * *gk - t);
        g
    }

    /// `(N/|B|) Σ_{j∈B} σ_j(1 − σ_j) x_j x_jᵀ + I`.
    pub fn fisher(&self, theta: &[f64], batch: Option<&[usize]>) -> SymMatrix {
        let d = self.dim();
        let mut f = DMatrix::zeros(d, d);
        self.for_each_row(batch, |j| {
            let s = sigmoid(self.data.logit(j, theta));
            let w = s * (1.0 - s);
            for a in 0..d {
                for b in 0..d {
                    f[(a, b)] += w * self.data.features[(j, a)] * self.data.features[(j, b)];
                }
            }
        });
        f *= self.batch_scale(batch);
        for a in 0..d {
            f[(a, a)] += 1.0;
        }
        SymMatrix::symmetrized(f)
    }
}
