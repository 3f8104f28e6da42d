//! Midpoint-rule grids over a 2D box: a discretized sampler and a moment oracle.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::psdlin::SymMatrix;

/// Axis-aligned box `[x_lo, x_hi] × [y_lo, y_hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridBounds {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl GridBounds {
    pub fn square(lo: f64, hi: f64) -> Self {
        GridBounds {
            x: (lo, hi),
            y: (lo, hi),
        }
    }

    fn check(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo < hi;
        if !(ok(self.x) && ok(self.y)) {
            return Err(Error::invalid("grid bounds must be finite with lo < hi"));
        }
        Ok(())
    }

    fn cell(&self, resolution: usize) -> (f64, f64) {
        (
            (self.x.1 - self.x.0) / resolution as f64,
            (self.y.1 - self.y.0) / resolution as f64,
        )
    }
}

pub const MIN_RESOLUTION: usize = 16;

/// Cell-center log densities in row-major order (x index outer).
fn cell_log_densities(
    log_density: &dyn Fn(&[f64]) -> f64,
    bounds: &GridBounds,
    resolution: usize,
) -> Vec<f64> {
    let (hx, hy) = bounds.cell(resolution);
    let mut out = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        let x = bounds.x.0 + (i as f64 + 0.5) * hx;
        for j in 0..resolution {
            let y = bounds.y.0 + (j as f64 + 0.5) * hy;
            out.push(log_density(&[x, y]));
        }
    }
    out
}

fn normalized_masses(logs: &[f64]) -> Result<Vec<f64>> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Domain(
            "density vanishes or diverges on the whole grid".into(),
        ));
    }
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / total).collect())
}

/// Normalized mean and covariance of a 2D unnormalized density by midpoint quadrature.
pub fn moments(
    log_density: &dyn Fn(&[f64]) -> f64,
    bounds: GridBounds,
    resolution: usize,
) -> Result<(Vec<f64>, SymMatrix)> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::invalid(format!(
            "grid resolution must be at least {MIN_RESOLUTION}, got {resolution}"
        )));
    }
    bounds.check()?;
    let masses = normalized_masses(&cell_log_densities(log_density, &bounds, resolution))?;
    let (hx, hy) = bounds.cell(resolution);
    let center = |i: usize, j: usize| {
        [
            bounds.x.0 + (i as f64 + 0.5) * hx,
            bounds.y.0 + (j as f64 + 0.5) * hy,
        ]
    };
    let mut mean = [0.0; 2];
    for i in 0..resolution {
        for j in 0..resolution {
            let w = masses[i * resolution + j];
            let c = center(i, j);
            mean[0] += w * c[0];
            mean[1] += w * c[1];
        }
    }
    let mut cov = [0.0; 3];
    for i in 0..resolution {
        for j in 0..resolution {
            let w = masses[i * resolution + j];
            let c = center(i, j);
            let (dx, dy) = (c[0] - mean[0], c[1] - mean[1]);
            cov[0] += w * dx * dx;
            cov[1] += w * dx * dy;
            cov[2] += w * dy * dy;
        }
    }
    let cov = SymMatrix::from_row_slice(2, &[cov[0], cov[1], cov[1], cov[2]])?;
    Ok((mean.to_vec(), cov))
}

/// Inverse-CDF sampler over a fixed grid of cell masses.
#[derive(Debug, Clone)]
pub struct GridSampler {
    bounds: GridBounds,
    resolution: usize,
    cdf: Vec<f64>,
}

impl GridSampler {
    pub fn new(
        log_density: &dyn Fn(&[f64]) -> f64,
        bounds: GridBounds,
        resolution: usize,
    ) -> Result<Self> {
        if resolution < MIN_RESOLUTION {
            return Err(Error::invalid(format!(
                "grid resolution must be at least {MIN_RESOLUTION}, got {resolution}"
            )));
        }
        bounds.check()?;
        let masses = normalized_masses(&cell_log_densities(log_density, &bounds, resolution))?;
        let mut acc = 0.0;
        let cdf = masses
            .iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect();
        Ok(GridSampler {
            bounds,
            resolution,
            cdf,
        })
    }

    /// Stratified draws `u_i = (i + U_i) / n`, each mapped to a cell and
    /// jittered uniformly inside it. Rows are shuffled before returning.
    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let (hx, hy) = self.bounds.cell(self.resolution);
        let total = *self.cdf.last().unwrap_or(&1.0);
        let mut out: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let u = (i as f64 + rng.random::<f64>()) / n as f64 * total;
                let cell = self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1);
                let (ci, cj) = (cell / self.resolution, cell % self.resolution);
                vec![
                    self.bounds.x.0 + (ci as f64 + rng.random::<f64>()) * hx,
                    self.bounds.y.0 + (cj as f64 + rng.random::<f64>()) * hy,
                ]
            })
            .collect();
        out.shuffle(rng);
        out
    }
}
