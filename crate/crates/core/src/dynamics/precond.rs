//! Preconditioners built from target curvature at the particles.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::kernels::{median_bandwidth, AnchorSet, Bandwidth};
use crate::particles::ParticleSet;
#[cfg(test)]
use crate::psdlin::DEFAULT_FLOOR_RATIO;
use crate::psdlin::{make_bundle, PreconditionerBundle, SymMatrix};
use crate::targets::{CurvatureMode, TargetModel};

/// `Q = (1/n) Σ_i H(x_i)`, repaired and factored.
pub fn averaged_preconditioner(
    particles: &ParticleSet,
    model: &TargetModel,
    mode: CurvatureMode,
    batch: Option<&[usize]>,
    floor_ratio: f64,
) -> Result<PreconditionerBundle> {
    let d = particles.dim();
    let mut sum = DMatrix::zeros(d, d);
    for x in particles.rows() {
        sum += model.curvature_batch(&x, mode, batch)?.as_matrix();
    }
    let mean = SymMatrix::new(sum / particles.len() as f64)?;
    make_bundle(&mean, floor_ratio)
}

/// One anchor per particle, carrying the repaired curvature there.
///
/// `bandwidth` applies to every anchor; the median trick is evaluated in
/// each anchor's own metric.
pub fn refresh_anchors(
    particles: &ParticleSet,
    model: &TargetModel,
    mode: CurvatureMode,
    batch: Option<&[usize]>,
    bandwidth: &Bandwidth,
    floor_ratio: f64,
) -> Result<AnchorSet> {
    let rows = particles.rows();
    let mut bundles = Vec::with_capacity(rows.len());
    let mut bandwidths = Vec::with_capacity(rows.len());
    for x in &rows {
        let bundle = make_bundle(&model.curvature_batch(x, mode, batch)?, floor_ratio)?;
        let h = match bandwidth {
            Bandwidth::Fixed(h) => *h,
            Bandwidth::Median if rows.len() < 2 => 1.0,
            Bandwidth::Median => median_bandwidth(particles, Some(&bundle))?,
        };
        bundles.push(bundle);
        bandwidths.push(Bandwidth::Fixed(h));
    }
    AnchorSet::new(rows, bundles, bandwidths)
}
