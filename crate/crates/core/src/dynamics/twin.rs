//! Change-of-variables check: the constant-preconditioner direction equals
//! the vanilla direction computed in the whitened space `y = Q₀^{1/2} x`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernels::{Bandwidth, KernelStrategy};
use crate::particles::ParticleSet;
use crate::psdlin::{PreconditionerBundle, SymMatrix};
use crate::targets::{Gaussian, TargetModel};

use super::svn::gradient_matrix;

/// Returns `(direct, mapped)`.
///
/// `direct` is the `K_{Q₀}` direction on `p`. `mapped` is `Q₀^{-1/2}` times
/// the scalar-kernel direction on `t(x_i)` against the pushforward density of
/// `p` under `t(x) = Q₀^{1/2} x`, which is built as its own Gaussian.
pub fn change_of_variables_twin(
    model: &Gaussian,
    q0: &PreconditionerBundle,
    particles: &ParticleSet,
    h: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let d = model.dim();
    if q0.dim() != d || particles.dim() != d {
        return Err(Error::invalid(format!(
            "dimension mismatch: target {d}, Q0 {}, particles {}",
            q0.dim(),
            particles.dim()
        )));
    }
    let p = TargetModel::Gaussian(model.clone());
    let direct = KernelStrategy::const_precond(q0.clone(), Bandwidth::Fixed(h))?
        .stein_direction(particles, &gradient_matrix(particles, &p, None)?)?
        .into_matrix();

    let s = q0.q_sqrt().as_matrix();
    let s_inv = q0.q_inv_sqrt().as_matrix();
    let precision = SymMatrix::new(s_inv * model.precision().q().as_matrix() * s_inv)?;
    let mean = s * nalgebra::DVector::from_column_slice(model.mean());
    let pushed = TargetModel::Gaussian(Gaussian::with_precision(
        mean.iter().copied().collect(),
        &precision,
    )?);
    let mapped_points = ParticleSet::new(particles.positions() * s)?;
    let vanilla = KernelStrategy::scalar_rbf(Bandwidth::Fixed(h))?
        .stein_direction(
            &mapped_points,
            &gradient_matrix(&mapped_points, &pushed, None)?,
        )?
        .into_matrix();
    // Rows are points, so left-multiplying each by Q₀^{-1/2} is a right product.
    Ok((direct, vanilla * s_inv))
}
