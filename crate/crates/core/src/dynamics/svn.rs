//! Stein variational Newton: the vanilla direction left-multiplied by a
//! per-particle inverse metric.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernels::{Bandwidth, KernelStrategy, SteinDirectionField};
use crate::particles::ParticleSet;
use crate::psdlin::{
    make_bundle, psd_repair, PreconditionerBundle, SymMatrix, DEFAULT_FLOOR_RATIO,
};
use crate::targets::{CurvatureMode, TargetModel};

use super::stepper::StepperState;

/// `H̃_i = (1/n) Σ_j [H(x_j) k(x_j, x_i)² + g_ji g_jiᵀ]` with
/// `g_ji = ∇_{x_i} k(x_j, x_i) = k (x_j − x_i) / h`, each repaired to PD.
pub fn svn_metrics(
    particles: &ParticleSet,
    model: &TargetModel,
    mode: CurvatureMode,
    batch: Option<&[usize]>,
    h: f64,
    floor_ratio: f64,
) -> Result<Vec<SymMatrix>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!(
            "bandwidth must be positive and finite, got {h}"
        )));
    }
    let (n, d) = (particles.len(), particles.dim());
    let rows = particles.rows();
    let hess = rows
        .iter()
        .map(|x| {
            model
                .curvature_batch(x, mode, batch)
                .map(SymMatrix::into_matrix)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut m = DMatrix::zeros(d, d);
        for j in 0..n {
            let diff: Vec<f64> = rows[j].iter().zip(&rows[i]).map(|(a, b)| a - b).collect();
            let k = (-diff.iter().map(|v| v * v).sum::<f64>() / (2.0 * h)).exp();
            m += &hess[j] * (k * k);
            for a in 0..d {
                for b in 0..d {
                    m[(a, b)] += (k * diff[a] / h) * (k * diff[b] / h);
                }
            }
        }
        let m = SymMatrix::new(m / n as f64)?;
        out.push(psd_repair(&m, floor_ratio)?);
    }
    Ok(out)
}

/// Factors each metric once so repeated solves are cheap.
pub fn factor_metrics(
    metrics: &[SymMatrix],
    floor_ratio: f64,
) -> Result<Vec<PreconditionerBundle>> {
    metrics
        .iter()
        .map(|m| make_bundle(m, floor_ratio))
        .collect()
}

/// Row `i` becomes `H̃_i⁻¹ φ(x_i)`.
pub fn svn_direction(
    field: &SteinDirectionField,
    metrics: &[PreconditionerBundle],
) -> Result<SteinDirectionField> {
    let dirs = field.directions();
    if metrics.len() != dirs.nrows() {
        return Err(Error::invalid(format!(
            "{} metrics for {} particles",
            metrics.len(),
            dirs.nrows()
        )));
    }
    let d = dirs.ncols();
    let mut out = DMatrix::zeros(dirs.nrows(), d);
    for (i, b) in metrics.iter().enumerate() {
        let v = b.q_inv().mul_vec(&field.row(i));
        for k in 0..d {
            out[(i, k)] = v[k];
        }
    }
    Ok(SteinDirectionField::new(out))
}

/// Vanilla direction with one median-trick bandwidth shared by the kernel and `H̃`.
pub fn svn_full_direction(
    particles: &ParticleSet,
    model: &TargetModel,
    mode: CurvatureMode,
    batch: Option<&[usize]>,
) -> Result<SteinDirectionField> {
    let mut kernel = KernelStrategy::scalar_rbf(Bandwidth::Median)?;
    kernel.resolve(particles)?;
    let h = match &kernel {
        KernelStrategy::ScalarRbf {
            bandwidth: Bandwidth::Fixed(h),
        } => *h,
        _ => unreachable!("scalar kernel resolved above"),
    };
    let grads = gradient_matrix(particles, model, batch)?;
    let field = kernel.stein_direction(particles, &grads)?;
    let metrics = factor_metrics(
        &svn_metrics(particles, model, mode, batch, h, DEFAULT_FLOOR_RATIO)?,
        DEFAULT_FLOOR_RATIO,
    )?;
    svn_direction(&field, &metrics)
}

pub fn svn_step(
    particles: &ParticleSet,
    model: &TargetModel,
    stepper: &mut StepperState,
    mode: CurvatureMode,
) -> Result<ParticleSet> {
    let dir = svn_full_direction(particles, model, mode, None)?;
    let mut next = particles.clone();
    stepper.step(&mut next, dir.directions())?;
    Ok(next)
}

pub(crate) fn gradient_matrix(
    particles: &ParticleSet,
    model: &TargetModel,
    batch: Option<&[usize]>,
) -> Result<DMatrix<f64>> {
    let (n, d) = (particles.len(), particles.dim());
    let mut g = DMatrix::zeros(n, d);
    for i in 0..n {
        let gi = model.grad_log_density_batch(&particles.point(i), batch)?;
        for k in 0..d {
            g[(i, k)] = gi[k];
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{Gaussian, StarParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gaussian() -> (TargetModel, SymMatrix) {
        let q = SymMatrix::from_row_slice(2, &[4.0, 1.0, 1.0, 2.0]).unwrap();
        (
            TargetModel::Gaussian(Gaussian::with_precision(vec![0.0, 0.0], &q).unwrap()),
            q,
        )
    }

    /// Independent double loop written against `eval`-style formulas.
    fn oracle(pts: &ParticleSet, model: &TargetModel, h: f64) -> Vec<DMatrix<f64>> {
        let n = pts.len();
        (0..n)
            .map(|i| {
                let xi = pts.point(i);
                let mut m = DMatrix::zeros(2, 2);
                for j in 0..n {
                    let xj = pts.point(j);
                    let dist2 = (xj[0] - xi[0]).powi(2) + (xj[1] - xi[1]).powi(2);
                    let k = (-dist2 / (2.0 * h)).exp();
                    let g =
                        nalgebra::Vector2::new(k * (xj[0] - xi[0]) / h, k * (xj[1] - xi[1]) / h);
                    let hj = model
                        .curvature(&xj, CurvatureMode::ExactHessian)
                        .unwrap()
                        .into_matrix();
                    m += hj * k * k
                        + DMatrix::from_column_slice(2, 2, (g * g.transpose()).as_slice());
                }
                m / n as f64
            })
            .collect()
    }

    #[test]
    fn metrics_match_double_loop() {
        let star = TargetModel::star(StarParams::default()).unwrap();
        let (gauss, _) = gaussian();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for model in [gauss, star] {
            let pts = ParticleSet::gaussian(3, &[0.0, 0.0], 1.0, &mut rng).unwrap();
            let ours = svn_metrics(
                &pts,
                &model,
                CurvatureMode::ExactHessian,
                None,
                0.7,
                DEFAULT_FLOOR_RATIO,
            )
            .unwrap();
            for (a, b) in ours.iter().zip(oracle(&pts, &model, 0.7)) {
                // Star Hessians may be repaired; only compare where no clipping happened.
                if b.clone().symmetric_eigenvalues().min() > 1e-3 {
                    assert!((a.as_matrix() - b).amax() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn single_and_coincident_particles_reduce_to_the_hessian() {
        let (model, q) = gaussian();
        let one = ParticleSet::from_rows(&[vec![0.3, 0.1]]).unwrap();
        let m = svn_metrics(
            &one,
            &model,
            CurvatureMode::ExactHessian,
            None,
            1.0,
            DEFAULT_FLOOR_RATIO,
        )
        .unwrap();
        assert!((m[0].as_matrix() - q.as_matrix()).amax() < 1e-14);
        let two = ParticleSet::from_rows(&[vec![0.3, 0.1], vec![0.3, 0.1]]).unwrap();
        let m = svn_metrics(
            &two,
            &model,
            CurvatureMode::ExactHessian,
            None,
            1.0,
            DEFAULT_FLOOR_RATIO,
        )
        .unwrap();
        assert!(m
            .iter()
            .all(|mi| (mi.as_matrix() - q.as_matrix()).amax() < 1e-14));
    }

    #[test]
    fn single_particle_direction_is_newton() {
        let (model, _) = gaussian();
        let x = vec![0.7, -1.3];
        let one = ParticleSet::from_rows(std::slice::from_ref(&x)).unwrap();
        let dir = svn_full_direction(&one, &model, CurvatureMode::ExactHessian, None).unwrap();
        assert!((dir.row(0)[0] + x[0]).abs() < 1e-10 && (dir.row(0)[1] + x[1]).abs() < 1e-10);
        let mut s = StepperState::fixed(1.0, 1, 2).unwrap();
        let next = svn_step(&one, &model, &mut s, CurvatureMode::ExactHessian).unwrap();
        assert!(next.point(0).iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn zero_field_leaves_particles_fixed() {
        let field = SteinDirectionField::new(DMatrix::zeros(2, 2));
        let metrics = factor_metrics(
            &[
                SymMatrix::identity(2),
                SymMatrix::from_diagonal(&[2.0, 3.0]),
            ],
            DEFAULT_FLOOR_RATIO,
        )
        .unwrap();
        assert_eq!(svn_direction(&field, &metrics).unwrap().max_norm(), 0.0);
    }
}
