use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// `n` points in `R^d`, one per row, plus the number of updates applied so far.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    positions: DMatrix<f64>,
    iteration: usize,
}

impl ParticleSet {
    pub fn new(positions: DMatrix<f64>) -> Result<Self> {
        if positions.nrows() == 0 || positions.ncols() == 0 {
            return Err(Error::invalid(
                "a particle set needs at least one point of positive dimension",
            ));
        }
        if positions.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("particle positions must be finite"));
        }
        Ok(ParticleSet {
            positions,
            iteration: 0,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("all particles must share one dimension"));
        }
        Self::new(DMatrix::from_fn(n, d, |i, k| rows[i][k]))
    }

    /// Draws `n` points from `N(mean, scale² I)`.
    pub fn gaussian<R: Rng + ?Sized>(
        n: usize,
        mean: &[f64],
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("particle count must be at least 1"));
        }
        let d = mean.len();
        let mut m = DMatrix::zeros(n, d);
        // Row-major draw order keeps samples stable if d changes layout.
        for i in 0..n {
            for k in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                m[(i, k)] = mean[k] + scale * z;
            }
        }
        Self::new(m)
    }

    pub fn len(&self) -> usize {
        self.positions.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.positions.ncols()
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn set_iteration(&mut self, iteration: usize) {
        self.iteration = iteration;
    }

    pub fn positions(&self) -> &DMatrix<f64> {
        &self.positions
    }

    pub(crate) fn positions_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.positions
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.positions.row(i).iter().copied().collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Row-major copy of the positions, `n * d` long.
    pub fn to_row_major(&self) -> Vec<f64> {
        let (n, d) = (self.len(), self.dim());
        let mut out = Vec::with_capacity(n * d);
        for i in 0..n {
            for k in 0..d {
                out.push(self.positions[(i, k)]);
            }
        }
        out
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.len() as f64;
        (0..self.dim())
            .map(|k| self.positions.column(k).iter().sum::<f64>() / n)
            .collect()
    }

    /// Empirical covariance with `1/n` normalization.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mean = self.mean();
        let (n, d) = (self.len(), self.dim());
        let mut cov = DMatrix::zeros(d, d);
        for i in 0..n {
            for a in 0..d {
                for b in 0..d {
                    cov[(a, b)] +=
                        (self.positions[(i, a)] - mean[a]) * (self.positions[(i, b)] - mean[b]);
                }
            }
        }
        cov / n as f64
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().all(|v| v.is_finite())
    }
}
