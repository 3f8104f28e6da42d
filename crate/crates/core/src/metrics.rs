//! Sample-quality metrics: squared MMD and posterior-predictive scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::median_bandwidth;
use crate::particles::ParticleSet;
use crate::targets::{sigmoid, LogisticDataset};

const PROB_CLIP: f64 = 1e-12;

/// Biased (V-statistic) squared MMD under a scalar RBF kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdReport {
    pub value: f64,
    pub bandwidth: f64,
    pub n_x: usize,
    pub n_y: usize,
}

/// Mean of `exp(−‖a − b‖² / 2h)` over all pairs `(a, b) ∈ A × B`.
fn mean_kernel(a: &[f64], b: &[f64], d: usize, h: f64) -> f64 {
    let (na, nb) = (a.len() / d, b.len() / d);
    let mut total = 0.0;
    for i in 0..na {
        let ai = &a[i * d..(i + 1) * d];
        let mut row = 0.0;
        for j in 0..nb {
            let bj = &b[j * d..(j + 1) * d];
            let sq: f64 = ai.iter().zip(bj).map(|(u, v)| (u - v) * (u - v)).sum();
            row += (-sq / (2.0 * h)).exp();
        }
        total += row;
    }
    total / (na * nb) as f64
}

fn check_bandwidth(bandwidth: f64) -> Result<()> {
    if !(bandwidth >= 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid(format!(
            "MMD bandwidth must be finite and ≥ 0, got {bandwidth}"
        )));
    }
    Ok(())
}

fn pooled_bandwidth(x: &ParticleSet, y: &ParticleSet) -> Result<f64> {
    let mut rows = x.rows();
    rows.extend(y.rows());
    median_bandwidth(&ParticleSet::from_rows(&rows)?, None)
}

/// Squared MMD between two samples. A bandwidth of 0 selects the median
/// trick over the pooled sample.
pub fn mmd_sq(x: &ParticleSet, y: &ParticleSet, bandwidth: f64) -> Result<MmdReport> {
    if x.dim() != y.dim() {
        return Err(Error::invalid(format!(
            "MMD samples have dimensions {} and {}",
            x.dim(),
            y.dim()
        )));
    }
    check_bandwidth(bandwidth)?;
    let h = if bandwidth == 0.0 {
        pooled_bandwidth(x, y)?
    } else {
        bandwidth
    };
    let d = x.dim();
    let (xf, yf) = (x.to_row_major(), y.to_row_major());
    let value = mean_kernel(&xf, &xf, d, h) + mean_kernel(&yf, &yf, d, h)
        - 2.0 * mean_kernel(&xf, &yf, d, h);
    Ok(MmdReport {
        value: value.max(0.0),
        bandwidth: h,
        n_x: x.len(),
        n_y: y.len(),
    })
}

/// A fixed reference sample with its bandwidth and self-similarity term
/// cached, for evaluating many particle sets against the same ground truth.
#[derive(Debug, Clone)]
pub struct MmdReference {
    sample: Vec<f64>,
    dim: usize,
    len: usize,
    bandwidth: f64,
    yy: f64,
}

impl MmdReference {
    /// A bandwidth of 0 selects the median trick over the reference sample.
    pub fn new(reference: &ParticleSet, bandwidth: f64) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        let h = if bandwidth == 0.0 {
            if reference.len() < 2 {
                1.0
            } else {
                median_bandwidth(reference, None)?
            }
        } else {
            bandwidth
        };
        let dim = reference.dim();
        let sample = reference.to_row_major();
        let yy = mean_kernel(&sample, &sample, dim, h);
        Ok(MmdReference {
            sample,
            dim,
            len: reference.len(),
            bandwidth: h,
            yy,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn mmd_sq(&self, x: &ParticleSet) -> Result<MmdReport> {
        if x.dim() != self.dim {
            return Err(Error::invalid(format!(
                "particles have dimension {}, reference has {}",
                x.dim(),
                self.dim
            )));
        }
        let xf = x.to_row_major();
        let h = self.bandwidth;
        let value = mean_kernel(&xf, &xf, self.dim, h) + self.yy
            - 2.0 * mean_kernel(&xf, &self.sample, self.dim, h);
        Ok(MmdReport {
            value: value.max(0.0),
            bandwidth: h,
            n_x: x.len(),
            n_y: self.len,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveMetrics {
    pub accuracy: f64,
    pub log_likelihood: f64,
}

/// Posterior-averaged predictive probabilities `p̂_j = mean_i σ(θ_iᵀ x_j)`.
pub fn predictive_probabilities(
    particles: &ParticleSet,
    data: &LogisticDataset,
) -> Result<Vec<f64>> {
    if particles.dim() != data.dim() {
        return Err(Error::invalid(format!(
            "particles have dimension {}, data has {} features",
            particles.dim(),
            data.dim()
        )));
    }
    let rows = particles.rows();
    Ok((0..data.len())
        .map(|j| {
            rows.iter()
                .map(|theta| sigmoid(data.logit(j, theta)))
                .sum::<f64>()
                / rows.len() as f64
        })
        .collect())
}

pub fn predictive_metrics(
    particles: &ParticleSet,
    data: &LogisticDataset,
) -> Result<PredictiveMetrics> {
    let probs = predictive_probabilities(particles, data)?;
    let mut correct = 0usize;
    let mut ll = 0.0;
    for (p, &y) in probs.iter().zip(data.labels()) {
        if (*p > 0.5) == (y == 1.0) {
            correct += 1;
        }
        let p = p.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
        ll += if y == 1.0 { p.ln() } else { (1.0 - p).ln() };
    }
    let n = data.len() as f64;
    Ok(PredictiveMetrics {
        accuracy: correct as f64 / n,
        log_likelihood: ll / n,
    })
}
