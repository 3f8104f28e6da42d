//! Differentiable target densities.
//!
//! Every model exposes an unnormalized log density, its exact gradient, and a
//! curvature matrix: the negative Hessian for the toy targets, or the Fisher
//! information for the logistic posterior. Where possible each model also
//! offers a reference sampler used as ground truth by the evaluation code.

mod banana;
mod gaussian;
pub mod grid;
mod logistic;
mod sine;
mod star;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use banana::BananaParams;
pub use gaussian::Gaussian;
pub use grid::{GridBounds, GridSampler};
pub use logistic::{sigmoid, LogisticDataset, LogisticPosterior};
pub use sine::SineParams;
pub use star::{rotation, StarMixture, StarParams};

use crate::error::{Error, Result};
use crate::particles::ParticleSet;
use crate::psdlin::SymMatrix;

/// Bounds of the grid reference sampler for sine and double banana.
pub const REFERENCE_GRID_BOUNDS: (f64, f64) = (-6.0, 6.0);
/// Cells per axis; keeps the cell width of a 512-cell grid over `[−3, 3]`.
pub const REFERENCE_GRID_RESOLUTION: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureMode {
    ExactHessian,
    Fisher,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Gaussian,
    StarMixture,
    Sine,
    DoubleBanana,
    LogisticPosterior,
}

impl TargetKind {
    pub fn name(self) -> &'static str {
        match self {
            TargetKind::Gaussian => "gaussian",
            TargetKind::StarMixture => "star",
            TargetKind::Sine => "sine",
            TargetKind::DoubleBanana => "double_banana",
            TargetKind::LogisticPosterior => "logistic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetModel {
    Gaussian(Gaussian),
    Star(StarMixture),
    Sine(SineParams),
    DoubleBanana(BananaParams),
    Logistic(LogisticPosterior),
}

impl TargetModel {
    pub fn sine(params: SineParams) -> Result<Self> {
        params.check()?;
        Ok(TargetModel::Sine(params))
    }

    pub fn double_banana(params: BananaParams) -> Result<Self> {
        params.check()?;
        Ok(TargetModel::DoubleBanana(params))
    }

    pub fn star(params: StarParams) -> Result<Self> {
        Ok(TargetModel::Star(StarMixture::new(params)?))
    }

    pub fn kind(&self) -> TargetKind {
        match self {
            TargetModel::Gaussian(_) => TargetKind::Gaussian,
            TargetModel::Star(_) => TargetKind::StarMixture,
            TargetModel::Sine(_) => TargetKind::Sine,
            TargetModel::DoubleBanana(_) => TargetKind::DoubleBanana,
            TargetModel::Logistic(_) => TargetKind::LogisticPosterior,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            TargetModel::Gaussian(g) => g.dim(),
            TargetModel::Logistic(l) => l.dim(),
            TargetModel::Star(_) | TargetModel::Sine(_) | TargetModel::DoubleBanana(_) => 2,
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "point has dimension {}, {} target expects {}",
                x.len(),
                self.kind().name(),
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite point {x:?}")));
        }
        Ok(())
    }

    /// Unnormalized log density. Star includes its exact mixture normalizer.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(match self {
            TargetModel::Gaussian(g) => g.log_density(x),
            TargetModel::Star(s) => s.log_density(x),
            TargetModel::Sine(p) => p.log_density(x),
            TargetModel::DoubleBanana(p) => p.log_density(x),
            TargetModel::Logistic(l) => l.log_density(x),
        })
    }

    pub fn grad_log_density(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.grad_log_density_batch(x, None)
    }

    /// Gradient with the likelihood restricted to `batch` (rescaled to full
    /// data). `batch` is ignored by targets without data.
    pub fn grad_log_density_batch(&self, x: &[f64], batch: Option<&[usize]>) -> Result<Vec<f64>> {
        self.check_point(x)?;
        match self {
            TargetModel::Gaussian(g) => Ok(g.grad(x)),
            TargetModel::Star(s) => Ok(s.grad(x)),
            TargetModel::Sine(p) => Ok(p.grad(x)),
            TargetModel::DoubleBanana(p) => p
                .grad(x)
                .ok_or_else(|| Error::Domain(format!("double banana density is zero at {x:?}"))),
            TargetModel::Logistic(l) => Ok(l.grad(x, batch)),
        }
    }

    pub fn curvature(&self, x: &[f64], mode: CurvatureMode) -> Result<SymMatrix> {
        self.curvature_batch(x, mode, None)
    }

    pub fn curvature_batch(
        &self,
        x: &[f64],
        mode: CurvatureMode,
        batch: Option<&[usize]>,
    ) -> Result<SymMatrix> {
        self.check_point(x)?;
        match (self, mode) {
            (TargetModel::Gaussian(g), CurvatureMode::ExactHessian) => Ok(g.neg_hessian()),
            (TargetModel::Star(s), CurvatureMode::ExactHessian) => Ok(s.neg_hessian(x)),
            (TargetModel::Sine(p), CurvatureMode::ExactHessian) => Ok(p.neg_hessian(x)),
            (TargetModel::DoubleBanana(p), CurvatureMode::ExactHessian) => p
                .neg_hessian(x)
                .ok_or_else(|| Error::Domain(format!("double banana density is zero at {x:?}"))),
            (TargetModel::Logistic(l), CurvatureMode::Fisher) => Ok(l.fisher(x, batch)),
            (model, mode) => Err(Error::Config(format!(
                "curvature mode {mode:?} is not supported by the {} target",
                model.kind().name()
            ))),
        }
    }

    /// The curvature mode a target supports.
    pub fn default_curvature(&self) -> CurvatureMode {
        match self {
            TargetModel::Logistic(_) => CurvatureMode::Fisher,
            _ => CurvatureMode::ExactHessian,
        }
    }

    pub fn supports_curvature(&self, mode: CurvatureMode) -> bool {
        mode == self.default_curvature()
    }

    pub fn draw_minibatch<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vec<usize>> {
        match self {
            TargetModel::Logistic(l) => l.draw_minibatch(rng),
            _ => None,
        }
    }

    pub fn has_reference_sampler(&self) -> bool {
        !matches!(self, TargetModel::Logistic(_))
    }

    /// Ground-truth sample: exact ancestral sampling for Gaussian and star,
    /// the grid sampler for sine and double banana.
    pub fn reference_sample(&self, n: usize, seed: u64) -> Result<ParticleSet> {
        if n == 0 {
            return Err(Error::invalid("reference sample size must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = match self {
            TargetModel::Gaussian(g) => (0..n).map(|_| g.sample(&mut rng)).collect(),
            TargetModel::Star(s) => (0..n).map(|_| s.sample(&mut rng)).collect(),
            TargetModel::Sine(_) | TargetModel::DoubleBanana(_) => {
                let (lo, hi) = REFERENCE_GRID_BOUNDS;
                let sampler =
                    self.grid_sampler(GridBounds::square(lo, hi), REFERENCE_GRID_RESOLUTION)?;
                sampler.draw(n, &mut rng)
            }
            TargetModel::Logistic(_) => {
                return Err(Error::Config(
                    "the logistic posterior has no reference sampler".into(),
                ))
            }
        };
        ParticleSet::from_rows(&rows)
    }

    fn density_2d(&self) -> Result<impl Fn(&[f64]) -> f64 + '_> {
        if self.dim() != 2 {
            return Err(Error::invalid(format!(
                "grid methods need a 2D target, {} has dimension {}",
                self.kind().name(),
                self.dim()
            )));
        }
        Ok(move |x: &[f64]| self.log_density(x).unwrap_or(f64::NEG_INFINITY))
    }

    pub fn grid_sampler(&self, bounds: GridBounds, resolution: usize) -> Result<GridSampler> {
        let f = self.density_2d()?;
        GridSampler::new(&f, bounds, resolution)
    }

    /// Normalized mean and covariance by midpoint quadrature.
    pub fn grid_moments(
        &self,
        bounds: GridBounds,
        resolution: usize,
    ) -> Result<(Vec<f64>, SymMatrix)> {
        let f = self.density_2d()?;
        grid::moments(&f, bounds, resolution)
    }
}
