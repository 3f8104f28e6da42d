use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::psdlin::{make_bundle, PreconditionerBundle, SymMatrix};

/// Multivariate normal `N(mean, Q^{-1})`, parameterized by its precision `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: Vec<f64>,
    precision: PreconditionerBundle,
}

/// Precisions are expected to be PD already; the floor only guards roundoff.
const FLOOR: f64 = 1e-12;

impl Gaussian {
    pub fn with_precision(mean: Vec<f64>, precision: &SymMatrix) -> Result<Self> {
        if mean.len() != precision.dim() {
            return Err(Error::invalid(format!(
                "mean has dimension {} but precision is {}x{}",
                mean.len(),
                precision.dim(),
                precision.dim()
            )));
        }
        if precision.eigenvalues()[0] <= 0.0 {
            return Err(Error::invalid(
                "gaussian precision must be positive definite",
            ));
        }
        Ok(Gaussian {
            mean,
            precision: make_bundle(precision, FLOOR)?,
        })
    }

    pub fn with_covariance(mean: Vec<f64>, covariance: &SymMatrix) -> Result<Self> {
        if covariance.eigenvalues()[0] <= 0.0 {
            return Err(Error::invalid(
                "gaussian covariance must be positive definite",
            ));
        }
        let cov = make_bundle(covariance, FLOOR)?;
        Self::with_precision(mean, cov.q_inv())
    }

    pub fn standard(dim: usize) -> Self {
        Gaussian {
            mean: vec![0.0; dim],
            precision: PreconditionerBundle::identity(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn precision(&self) -> &PreconditionerBundle {
        &self.precision
    }

    pub fn covariance(&self) -> &SymMatrix {
        self.precision.q_inv()
    }

    fn centered(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).map(|(a, m)| a - m).collect()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        -0.5 * self.precision.q().quad_form(&self.centered(x))
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.precision.q().mul_vec(&self.centered(x));
        g.iter_mut().for_each(|v| *v = -*v);
        g
    }

    pub fn neg_hessian(&self) -> SymMatrix {
        self.precision.q().clone()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.dim())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let mut x = self.precision.q_inv_sqrt().mul_vec(&z);
        x.iter_mut().zip(&self.mean).for_each(|(v, m)| *v += m);
        x
    }
}
