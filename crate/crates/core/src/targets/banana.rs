use serde::{Deserialize, Serialize};

use crate::psdlin::SymMatrix;

/// Double banana: `log p(x) = −‖x‖²/(2σ₁) − (y − F(x))²/(2σ₂)` with
/// `F(x) = log((1 − x₁)² + 100(x₂ − x₁²)²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BananaParams {
    #[serde(default = "BananaParams::default_y")]
    pub y_obs: f64,
    #[serde(default = "BananaParams::default_sigma1")]
    pub sigma1: f64,
    #[serde(default = "BananaParams::default_sigma2")]
    pub sigma2: f64,
}

impl BananaParams {
    fn default_y() -> f64 {
        30f64.ln()
    }
    fn default_sigma1() -> f64 {
        1.0
    }
    fn default_sigma2() -> f64 {
        0.09
    }

    pub(crate) fn check(&self) -> crate::Result<()> {
        if !(self.sigma1 > 0.0 && self.sigma2 > 0.0 && self.y_obs.is_finite()) {
            return Err(crate::Error::invalid(
                "double banana parameters need sigma1, sigma2 > 0 and finite y_obs",
            ));
        }
        Ok(())
    }

    /// Rosenbrock-type inner term `g(x)` with its gradient and Hessian.
    fn inner(x: &[f64]) -> (f64, [f64; 2], [f64; 3]) {
        let (x1, x2) = (x[0], x[1]);
        let r = x2 - x1 * x1;
        let g = (1.0 - x1).powi(2) + 100.0 * r * r;
        let dg = [-2.0 * (1.0 - x1) - 400.0 * x1 * r, 200.0 * r];
        let hg = [2.0 - 400.0 * r + 800.0 * x1 * x1, -400.0 * x1, 200.0];
        (g, dg, hg)
    }

    /// Negative infinity where `g(x) = 0`, i.e. at `(1, 1)`.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let (g, _, _) = Self::inner(x);
        if g <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let resid = self.y_obs - g.ln();
        -(x[0] * x[0] + x[1] * x[1]) / (2.0 * self.sigma1) - resid * resid / (2.0 * self.sigma2)
    }

    /// `None` at the singular point.
    pub fn grad(&self, x: &[f64]) -> Option<Vec<f64>> {
        let (g, dg, _) = Self::inner(x);
        if g <= 0.0 {
            return None;
        }
        let resid = self.y_obs - g.ln();
        let c = resid / (self.sigma2 * g);
        Some(vec![
            -x[0] / self.sigma1 + c * dg[0],
            -x[1] / self.sigma1 + c * dg[1],
        ])
    }

    pub fn neg_hessian(&self, x: &[f64]) -> Option<SymMatrix> {
        let (g, dg, hg) = Self::inner(x);
        if g <= 0.0 {
            return None;
        }
        let resid = self.y_obs - g.ln();
        let df = [dg[0] / g, dg[1] / g];
        // ∇²F = ∇²g / g − ∇g ∇gᵀ / g²
        let hf = [
            hg[0] / g - df[0] * df[0],
            hg[1] / g - df[0] * df[1],
            hg[2] / g - df[1] * df[1],
        ];
        // ∇² log p = −I/σ₁ + (−∇F ∇Fᵀ + (y − F) ∇²F) / σ₂
        let h11 = 1.0 / self.sigma1 + (df[0] * df[0] - resid * hf[0]) / self.sigma2;
        let h12 = (df[0] * df[1] - resid * hf[1]) / self.sigma2;
        let h22 = 1.0 / self.sigma1 + (df[1] * df[1] - resid * hf[2]) / self.sigma2;
        Some(SymMatrix::symmetrized(nalgebra::DMatrix::from_row_slice(
            2,
            2,
            &[h11, h12, h12, h22],
        )))
    }
}

impl Default for BananaParams {
    fn default() -> Self {
        BananaParams {
            y_obs: Self::default_y(),
            sigma1: Self::default_sigma1(),
            sigma2: Self::default_sigma2(),
        }
    }
}
