use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::psdlin::{make_bundle, PreconditionerBundle, SymMatrix};

/// Parameters of the rotated equal-weight Gaussian mixture ("star").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StarParams {
    #[serde(default = "StarParams::default_components")]
    pub components: usize,
    #[serde(default = "StarParams::default_mu1")]
    pub mu1: Vec<f64>,
    #[serde(default = "StarParams::default_sigma1")]
    pub sigma1: SymMatrix,
}

impl StarParams {
    fn default_components() -> usize {
        5
    }
    fn default_mu1() -> Vec<f64> {
        vec![0.0, 1.5]
    }
    fn default_sigma1() -> SymMatrix {
        SymMatrix::from_diagonal(&[1.0, 0.01])
    }
}

impl Default for StarParams {
    fn default() -> Self {
        StarParams {
            components: Self::default_components(),
            mu1: Self::default_mu1(),
            sigma1: Self::default_sigma1(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Component {
    mean: Vec<f64>,
    precision: SymMatrix,
    cov: PreconditionerBundle,
    log_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StarMixture {
    params: StarParams,
    components: Vec<Component>,
}

/// Rotation `[[cos θ, sin θ], [−sin θ, cos θ]]`.
pub fn rotation(theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, s, -s, c])
}

impl StarMixture {
    pub fn new(params: StarParams) -> Result<Self> {
        // K = 1 is accepted as a degenerate single Gaussian.
        if params.components == 0 {
            return Err(Error::invalid("star mixture needs at least one component"));
        }
        if params.mu1.len() != 2 || params.sigma1.dim() != 2 {
            return Err(Error::invalid("star mixture is defined in two dimensions"));
        }
        if params.sigma1.eigenvalues()[0] <= 0.0 {
            return Err(Error::invalid(
                "star component covariance must be positive definite",
            ));
        }
        let u = rotation(2.0 * PI / params.components as f64);
        let mut mean = nalgebra::DVector::from_column_slice(&params.mu1);
        let mut sigma = params.sigma1.as_matrix().clone();
        let mut components = Vec::with_capacity(params.components);
        for _ in 0..params.components {
            let cov_sym = SymMatrix::new(sigma.clone())?;
            let cov = make_bundle(&cov_sym, 1e-12)?;
            let log_norm = -0.5 * (2.0 * (2.0 * PI).ln() + cov.log_det_q());
            components.push(Component {
                mean: mean.iter().copied().collect(),
                precision: cov.q_inv().clone(),
                cov,
                log_norm,
            });
            mean = &u * mean;
            sigma = &u * sigma * u.transpose();
        }
        Ok(StarMixture { params, components })
    }

    pub fn params(&self) -> &StarParams {
        &self.params
    }

    pub fn component_means(&self) -> Vec<Vec<f64>> {
        self.components.iter().map(|c| c.mean.clone()).collect()
    }

    /// Per-component `(log N_k(x), −P_k (x − μ_k))`.
    fn component_terms(&self, x: &[f64]) -> Vec<(f64, Vec<f64>)> {
        self.components
            .iter()
            .map(|c| {
                let diff = [x[0] - c.mean[0], x[1] - c.mean[1]];
                let logn = c.log_norm - 0.5 * c.precision.quad_form(&diff);
                let mut g = c.precision.mul_vec(&diff);
                g.iter_mut().for_each(|v| *v = -*v);
                (logn, g)
            })
            .collect()
    }

    /// Posterior component responsibilities from per-component log terms.
    fn responsibilities(terms: &[(f64, Vec<f64>)]) -> (f64, Vec<f64>) {
        let max = terms.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = terms.iter().map(|t| (t.0 - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        let lse = max + total.ln();
        (lse, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let terms = self.component_terms(x);
        let (lse, _) = Self::responsibilities(&terms);
        lse - (self.components.len() as f64).ln()
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let terms = self.component_terms(x);
        let (_, r) = Self::responsibilities(&terms);
        let mut g = vec![0.0; 2];
        for (rk, (_, gk)) in r.iter().zip(&terms) {
            g[0] += rk * gk[0];
            g[1] += rk * gk[1];
        }
        g
    }

    /// `−∇² log p = Σ r_k P_k − Σ r_k g_k g_kᵀ + ḡ ḡᵀ`.
    pub fn neg_hessian(&self, x: &[f64]) -> SymMatrix {
        let terms = self.component_terms(x);
        let (_, r) = Self::responsibilities(&terms);
        let mut h = DMatrix::zeros(2, 2);
        let mut gbar = [0.0; 2];
        for ((rk, (_, gk)), c) in r.iter().zip(&terms).zip(&self.components) {
            for a in 0..2 {
                gbar[a] += rk * gk[a];
                for b in 0..2 {
                    h[(a, b)] += rk * (c.precision.get(a, b) - gk[a] * gk[b]);
                }
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                h[(a, b)] += gbar[a] * gbar[b];
            }
        }
        SymMatrix::symmetrized(h)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let k = rng.random_range(0..self.components.len());
        let c = &self.components[k];
        let z: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let mut x = c.cov.q_sqrt().mul_vec(&z);
        x[0] += c.mean[0];
        x[1] += c.mean[1];
        x
    }
}
