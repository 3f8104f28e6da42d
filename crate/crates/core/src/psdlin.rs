//! Small dense symmetric linear algebra.
//!
//! Everything here goes through one factorization: the symmetric
//! eigendecomposition. Preconditioners built from Hessians of multimodal
//! targets are routinely indefinite, so they are repaired by clipping the
//! spectrum from below before any square root or inverse is taken.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative eigenvalue floor used by [`psd_repair`].
pub const DEFAULT_FLOOR_RATIO: f64 = 1e-6;

/// A real symmetric matrix. Symmetry is enforced on construction by
/// averaging with the transpose, so the stored entries are exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::invalid(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::invalid("matrix dimension must be positive"));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix has non-finite entries"));
        }
        Ok(Self::symmetrized(m))
    }

    /// Wraps `m` after symmetrizing it. Callers guarantee shape and finiteness.
    pub(crate) fn symmetrized(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// Row-major `dim * dim` slice.
    pub fn from_row_slice(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::invalid(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    /// `vᵀ M v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let d = self.dim();
        debug_assert_eq!(v.len(), d);
        let mut acc = 0.0;
        for a in 0..d {
            let row: f64 = v
                .iter()
                .enumerate()
                .map(|(b, vb)| self.0[(a, b)] * vb)
                .sum();
            acc += v[a] * row;
        }
        acc
    }

    /// `out = M v`.
    pub fn mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        let d = self.dim();
        debug_assert_eq!(v.len(), d);
        debug_assert_eq!(out.len(), d);
        for (a, o) in out.iter_mut().enumerate() {
            *o = v
                .iter()
                .enumerate()
                .map(|(b, vb)| self.0[(a, b)] * vb)
                .sum();
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.mul_vec_into(v, &mut out);
        out
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut vals: Vec<f64> = SymmetricEigen::new(self.0.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        vals.sort_by(f64::total_cmp);
        vals
    }

    /// Rows of the matrix, for serialization.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|r| (0..self.dim()).map(|c| self.0[(r, c)]).collect())
            .collect()
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(serde::de::Error::custom("matrix rows must form a square"));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        SymMatrix::from_row_slice(d, &flat).map_err(serde::de::Error::custom)
    }
}

/// A positive-definite preconditioner `Q` with its cached factors.
#[derive(Debug, Clone, PartialEq)]
pub struct PreconditionerBundle {
    q: SymMatrix,
    q_sqrt: SymMatrix,
    q_inv_sqrt: SymMatrix,
    q_inv: SymMatrix,
    log_det_q: f64,
}

impl PreconditionerBundle {
    pub fn identity(dim: usize) -> Self {
        let id = SymMatrix::identity(dim);
        PreconditionerBundle {
            q: id.clone(),
            q_sqrt: id.clone(),
            q_inv_sqrt: id.clone(),
            q_inv: id,
            log_det_q: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.q.dim()
    }

    pub fn q(&self) -> &SymMatrix {
        &self.q
    }

    pub fn q_sqrt(&self) -> &SymMatrix {
        &self.q_sqrt
    }

    pub fn q_inv_sqrt(&self) -> &SymMatrix {
        &self.q_inv_sqrt
    }

    pub fn q_inv(&self) -> &SymMatrix {
        &self.q_inv
    }

    pub fn log_det_q(&self) -> f64 {
        self.log_det_q
    }
}

fn check_floor(floor_ratio: f64) -> Result<()> {
    if !(floor_ratio > 0.0 && floor_ratio < 1.0) {
        return Err(Error::invalid(format!(
            "floor_ratio must lie in (0, 1), got {floor_ratio}"
        )));
    }
    Ok(())
}

fn eigen_of(m: &SymMatrix) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(m.as_matrix().clone())
}

fn recompose(
    vectors: &DMatrix<f64>,
    values: impl Fn(f64) -> f64,
    lambdas: &DVector<f64>,
) -> SymMatrix {
    let mapped = DVector::from_iterator(lambdas.len(), lambdas.iter().map(|&l| values(l)));
    let scaled = vectors * DMatrix::from_diagonal(&mapped);
    SymMatrix::symmetrized(scaled * vectors.transpose())
}

/// Clips every eigenvalue of `m` from below at `floor_ratio * max(1, λ_max)`.
///
/// Eigenvectors are kept. When nothing needs clipping `m` is returned as is.
pub fn psd_repair(m: &SymMatrix, floor_ratio: f64) -> Result<SymMatrix> {
    check_floor(floor_ratio)?;
    if m.as_matrix().iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(
            "cannot repair a matrix with non-finite entries",
        ));
    }
    let eig = eigen_of(m);
    let lambda_max = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let floor = floor_ratio * lambda_max.max(1.0);
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return Ok(m.clone());
    }
    Ok(recompose(
        &eig.eigenvectors,
        |l| l.max(floor),
        &eig.eigenvalues,
    ))
}

/// Repairs `m` and caches `Q^{1/2}`, `Q^{-1/2}`, `Q^{-1}` and `log det Q`.
pub fn make_bundle(m: &SymMatrix, floor_ratio: f64) -> Result<PreconditionerBundle> {
    let q = psd_repair(m, floor_ratio)?;
    let eig = eigen_of(&q);
    // Reconstruction noise can push an eigenvalue a hair under the floor.
    let lambda_max = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let floor = floor_ratio * lambda_max.max(1.0);
    let lambdas = eig.eigenvalues.map(|l| l.max(floor));
    let v = &eig.eigenvectors;
    Ok(PreconditionerBundle {
        q_sqrt: recompose(v, f64::sqrt, &lambdas),
        q_inv_sqrt: recompose(v, |l| 1.0 / l.sqrt(), &lambdas),
        q_inv: recompose(v, |l| 1.0 / l, &lambdas),
        log_det_q: lambdas.iter().map(|l| l.ln()).sum(),
        q,
    })
}

/// `(x − y)ᵀ Q (x − y)`.
pub fn mahalanobis_sq(x: &[f64], y: &[f64], bundle: &PreconditionerBundle) -> Result<f64> {
    if x.len() != y.len() || x.len() != bundle.dim() {
        return Err(Error::invalid(format!(
            "dimension mismatch: x has {}, y has {}, Q is {}x{}",
            x.len(),
            y.len(),
            bundle.dim(),
            bundle.dim()
        )));
    }
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    Ok(bundle.q().quad_form(&diff).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> SymMatrix {
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        SymMatrix::new(&a * a.transpose() + DMatrix::identity(d, d) * 0.1).unwrap()
    }

    #[test]
    fn repair_leaves_identity_alone() {
        let id = SymMatrix::identity(3);
        assert_eq!(psd_repair(&id, 1e-6).unwrap(), id);
    }

    #[test]
    fn repair_clips_negative_eigenvalue() {
        let m = SymMatrix::from_diagonal(&[2.0, -1.0]);
        let r = psd_repair(&m, 1e-6).unwrap();
        assert_relative_eq!(r.get(0, 0), 2.0, epsilon = 1e-15);
        assert_relative_eq!(r.get(1, 1), 2e-6, epsilon = 1e-15);
        assert_relative_eq!(r.get(0, 1), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn repair_of_zero_uses_unit_floor() {
        let r = psd_repair(&SymMatrix::from_diagonal(&[0.0, 0.0]), 1e-6).unwrap();
        assert_relative_eq!(r.get(0, 0), 1e-6, epsilon = 1e-18);
        assert_relative_eq!(r.get(1, 1), 1e-6, epsilon = 1e-18);
    }

    #[test]
    fn repair_rejects_bad_input() {
        let bad = SymMatrix(DMatrix::from_row_slice(
            2,
            2,
            &[1.0, f64::NAN, f64::NAN, 1.0],
        ));
        assert!(matches!(
            psd_repair(&bad, 1e-6),
            Err(Error::InvalidInput(_))
        ));
        assert!(psd_repair(&SymMatrix::identity(2), 0.0).is_err());
        assert!(psd_repair(&SymMatrix::identity(2), 1.0).is_err());
        assert!(SymMatrix::new(DMatrix::from_element(2, 2, f64::INFINITY)).is_err());
    }

    #[test]
    fn construction_symmetrizes() {
        let m = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0])).unwrap();
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(m.get(1, 0), 1.0);
    }

    #[test]
    fn bundle_of_identity() {
        let b = make_bundle(&SymMatrix::identity(3), 1e-6).unwrap();
        let id = DMatrix::<f64>::identity(3, 3);
        for m in [b.q(), b.q_sqrt(), b.q_inv_sqrt(), b.q_inv()] {
            assert!(rel_frob(m.as_matrix(), &id) < 1e-14);
        }
        assert_relative_eq!(b.log_det_q(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn bundle_of_diagonal() {
        let b = make_bundle(&SymMatrix::from_diagonal(&[4.0, 1.0]), 1e-6).unwrap();
        assert_relative_eq!(b.q_sqrt().get(0, 0), 2.0, epsilon = 1e-12);
        assert_relative_eq!(b.q_sqrt().get(1, 1), 1.0, epsilon = 1e-12);
        assert_relative_eq!(b.q_inv().get(0, 0), 0.25, epsilon = 1e-12);
        assert_relative_eq!(b.q_inv().get(1, 1), 1.0, epsilon = 1e-12);
        assert_relative_eq!(b.log_det_q(), 4f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn bundle_whitens_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_spd(&mut rng, 3);
        let b = make_bundle(&q, 1e-6).unwrap();
        let w = b.q_inv_sqrt().as_matrix() * q.as_matrix() * b.q_inv_sqrt().as_matrix();
        assert!(rel_frob(&w, &DMatrix::identity(3, 3)) < 1e-10);
    }

    #[test]
    fn bundle_round_trips_over_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let d = rng.random_range(1..=10);
            let q = random_spd(&mut rng, d);
            let b = make_bundle(&q, 1e-6).unwrap();
            let s = b.q_sqrt().as_matrix();
            let is = b.q_inv_sqrt().as_matrix();
            assert!(rel_frob(&(s * s), b.q().as_matrix()) < 1e-8);
            assert!(rel_frob(&(is * is), b.q_inv().as_matrix()) < 1e-8);
            let prod = b.q_inv().as_matrix() * b.q().as_matrix();
            assert!(rel_frob(&prod, &DMatrix::identity(d, d)) < 1e-8);
        }
    }

    #[test]
    fn repair_preserves_unclipped_eigenpairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let d = rng.random_range(2..=6);
            let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-2.0..2.0));
            let m = SymMatrix::new(a).unwrap();
            let r = psd_repair(&m, 1e-6).unwrap();
            let eig = SymmetricEigen::new(m.as_matrix().clone());
            let lmax = eig.eigenvalues.max();
            let floor = 1e-6 * lmax.max(1.0);
            let mut clipped = 0;
            for k in 0..d {
                let v = eig.eigenvectors.column(k);
                let l = eig.eigenvalues[k];
                let rv = r.as_matrix() * v;
                if l >= floor {
                    assert!((rv - v * l).norm() < 1e-10);
                } else {
                    clipped += 1;
                    assert!((rv - v * floor).norm() < 1e-10);
                }
            }
            let delta = r.as_matrix() - m.as_matrix();
            let rank = SymmetricEigen::new(delta)
                .eigenvalues
                .iter()
                .filter(|l| l.abs() > 1e-9)
                .count();
            assert!(rank <= clipped);
        }
    }

    #[test]
    fn mahalanobis_examples() {
        let b = make_bundle(&SymMatrix::from_diagonal(&[4.0, 1.0]), 1e-6).unwrap();
        assert_eq!(mahalanobis_sq(&[1.0, 3.0], &[0.0, 3.0], &b).unwrap(), 4.0);
        assert_eq!(mahalanobis_sq(&[0.3, -2.0], &[0.3, -2.0], &b).unwrap(), 0.0);
        let id = PreconditionerBundle::identity(2);
        assert_eq!(mahalanobis_sq(&[1.0, 1.0], &[0.0, 0.0], &id).unwrap(), 2.0);
        assert!(mahalanobis_sq(&[1.0], &[0.0, 0.0], &id).is_err());
    }

    proptest! {
        #[test]
        fn mahalanobis_under_identity_is_euclidean(
            x in proptest::collection::vec(-10.0..10.0f64, 4),
            y in proptest::collection::vec(-10.0..10.0f64, 4),
        ) {
            let id = PreconditionerBundle::identity(4);
            let euclid: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
            prop_assert_eq!(mahalanobis_sq(&x, &y, &id).unwrap(), euclid);
            prop_assert_eq!(
                mahalanobis_sq(&x, &y, &id).unwrap(),
                mahalanobis_sq(&y, &x, &id).unwrap()
            );
        }
    }
}
