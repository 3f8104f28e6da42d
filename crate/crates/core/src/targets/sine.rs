use serde::{Deserialize, Serialize};

use crate::psdlin::SymMatrix;

/// `log p(x) = −(x₂ + sin(α x₁))² / (2σ₁) − (x₁² + x₂²) / (2σ₂)`, unnormalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineParams {
    #[serde(default = "SineParams::default_alpha")]
    pub alpha: f64,
    #[serde(default = "SineParams::default_sigma1")]
    pub sigma1: f64,
    #[serde(default = "SineParams::default_sigma2")]
    pub sigma2: f64,
}

impl SineParams {
    fn default_alpha() -> f64 {
        1.0
    }
    fn default_sigma1() -> f64 {
        0.003
    }
    fn default_sigma2() -> f64 {
        1.0
    }

    pub(crate) fn check(&self) -> crate::Result<()> {
        if !(self.sigma1 > 0.0 && self.sigma2 > 0.0 && self.alpha.is_finite()) {
            return Err(crate::Error::invalid(
                "sine parameters need sigma1, sigma2 > 0 and finite alpha",
            ));
        }
        Ok(())
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let u = x[1] + (self.alpha * x[0]).sin();
        -u * u / (2.0 * self.sigma1) - (x[0] * x[0] + x[1] * x[1]) / (2.0 * self.sigma2)
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let (s, c) = (self.alpha * x[0]).sin_cos();
        let u = x[1] + s;
        vec![
            -u * self.alpha * c / self.sigma1 - x[0] / self.sigma2,
            -u / self.sigma1 - x[1] / self.sigma2,
        ]
    }

    pub fn neg_hessian(&self, x: &[f64]) -> SymMatrix {
        let a = self.alpha;
        let (s, c) = (a * x[0]).sin_cos();
        let u = x[1] + s;
        let h11 = (a * a * c * c - u * a * a * s) / self.sigma1 + 1.0 / self.sigma2;
        let h12 = a * c / self.sigma1;
        let h22 = 1.0 / self.sigma1 + 1.0 / self.sigma2;
        SymMatrix::symmetrized(nalgebra::DMatrix::from_row_slice(
            2,
            2,
            &[h11, h12, h12, h22],
        ))
    }
}

impl Default for SineParams {
    fn default() -> Self {
        SineParams {
            alpha: Self::default_alpha(),
            sigma1: Self::default_sigma1(),
            sigma2: Self::default_sigma2(),
        }
    }
}
