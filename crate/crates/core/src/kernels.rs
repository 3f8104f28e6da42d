//! Matrix-valued kernels and the Stein directions they induce.
//!
//! For a kernel `K` the update direction at particle `x_i` is
//!
//! ```text
//! φ(x_i) = (1/n) Σ_j [ K(x_i, x_j) ∇log p(x_j) + div_j K(x_i, x_j) ]
//! ```
//!
//! where the `ℓ`-th entry of `div_j K(x_i, x_j)` is `Σ_m ∂K_{ℓm}(x_i, x_j) / ∂x_j^m`.
//! Every kernel below has that divergence in closed form.
//!
//! | kind            | `K(x, y)`                                         |
//! |-----------------|---------------------------------------------------|
//! | scalar RBF      | `exp(−‖x − y‖² / 2h) · I`                         |
//! | const precond   | `Q⁻¹ exp(−‖x − y‖²_Q / 2h)`                       |
//! | mixture         | `Σ_ℓ w_ℓ(x) w_ℓ(y) K_{Q_ℓ}(x, y)`                 |
//! | diagonal        | `diag_m exp(−(x_m − y_m)² / 2h_m)`                |

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::particles::ParticleSet;
use crate::psdlin::PreconditionerBundle;

/// Bandwidth policy: the median trick applied to the current particles, or a fixed value.
#[derive(Debug, Clone, PartialEq)]
pub enum Bandwidth<T = f64> {
    Median,
    Fixed(T),
}

impl<T> Bandwidth<T> {
    fn value(&self) -> Option<&T> {
        match self {
            Bandwidth::Median => None,
            Bandwidth::Fixed(v) => Some(v),
        }
    }
}

/// Anchor points `z_ℓ`, each with its own preconditioner `Q_ℓ` and bandwidth `h_ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    anchors: Vec<Vec<f64>>,
    bundles: Vec<PreconditionerBundle>,
    bandwidths: Vec<Bandwidth>,
}

impl AnchorSet {
    pub fn new(
        anchors: Vec<Vec<f64>>,
        bundles: Vec<PreconditionerBundle>,
        bandwidths: Vec<Bandwidth>,
    ) -> Result<Self> {
        if anchors.is_empty() {
            return Err(Error::invalid("anchor set must be non-empty"));
        }
        if anchors.len() != bundles.len() || anchors.len() != bandwidths.len() {
            return Err(Error::invalid(
                "anchors, bundles and bandwidths must have equal length",
            ));
        }
        let d = anchors[0].len();
        if anchors.iter().any(|z| z.len() != d) || bundles.iter().any(|b| b.dim() != d) {
            return Err(Error::invalid(
                "all anchors and preconditioners must share one dimension",
            ));
        }
        check_fixed(bandwidths.iter().filter_map(Bandwidth::value))?;
        Ok(AnchorSet {
            anchors,
            bundles,
            bandwidths,
        })
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.anchors[0].len()
    }

    pub fn anchors(&self) -> &[Vec<f64>] {
        &self.anchors
    }

    pub fn bundles(&self) -> &[PreconditionerBundle] {
        &self.bundles
    }

    pub fn bandwidths(&self) -> &[Bandwidth] {
        &self.bandwidths
    }

    /// `log N(x; z_ℓ, Q_ℓ⁻¹)` for every anchor.
    fn log_components(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len() as f64;
        self.anchors
            .iter()
            .zip(&self.bundles)
            .map(|(z, b)| {
                let diff: Vec<f64> = x.iter().zip(z).map(|(a, c)| a - c).collect();
                -0.5 * b.q().quad_form(&diff) - 0.5 * d * (2.0 * PI).ln() + 0.5 * b.log_det_q()
            })
            .collect()
    }

    fn weights_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let logs = self.log_components(x);
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|v| v / total).collect()
    }

    /// Weights and their gradients
    /// `∇w_ℓ = w_ℓ (−Q_ℓ(x − z_ℓ) + Σ_ℓ' w_ℓ' Q_ℓ'(x − z_ℓ'))`.
    fn weights_and_grads_unchecked(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let w = self.weights_unchecked(x);
        let d = x.len();
        let pulls: Vec<Vec<f64>> = self
            .anchors
            .iter()
            .zip(&self.bundles)
            .map(|(z, b)| {
                let diff: Vec<f64> = x.iter().zip(z).map(|(a, c)| a - c).collect();
                b.q().mul_vec(&diff)
            })
            .collect();
        let mut avg = vec![0.0; d];
        for (wl, p) in w.iter().zip(&pulls) {
            for k in 0..d {
                avg[k] += wl * p[k];
            }
        }
        let grads = w
            .iter()
            .zip(&pulls)
            .map(|(wl, p)| (0..d).map(|k| wl * (avg[k] - p[k])).collect())
            .collect();
        (w, grads)
    }
}

fn check_fixed<'a>(values: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    for &h in values {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid(format!(
                "bandwidth must be positive and finite, got {h}"
            )));
        }
    }
    Ok(())
}

fn check_dims(x: &[f64], y: &[f64], d: Option<usize>) -> Result<()> {
    if x.len() != y.len() || d.is_some_and(|d| d != x.len()) {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}{}",
            x.len(),
            y.len(),
            d.map(|d| format!(" (kernel dimension {d})"))
                .unwrap_or_default()
        )));
    }
    Ok(())
}

/// Mixture weights `w_ℓ(x) = N(x; z_ℓ, Q_ℓ⁻¹) / Σ_ℓ' N(x; z_ℓ', Q_ℓ'⁻¹)`, computed in log space.
pub fn mixture_weights(x: &[f64], anchors: &AnchorSet) -> Result<Vec<f64>> {
    check_dims(x, &anchors.anchors[0], None)?;
    Ok(anchors.weights_unchecked(x))
}

/// Mixture weights together with their analytic gradients in `x`.
pub fn mixture_weight_grads(x: &[f64], anchors: &AnchorSet) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    check_dims(x, &anchors.anchors[0], None)?;
    Ok(anchors.weights_and_grads_unchecked(x))
}

fn median_of(mut values: Vec<f64>) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

fn median_to_bandwidth(median: f64, n: usize) -> f64 {
    let h = median / ((n + 1) as f64).ln();
    if h > 0.0 && h.is_finite() {
        h
    } else {
        1.0
    }
}

fn pairwise_sq(
    points: &[f64],
    n: usize,
    d: usize,
    metric: Option<&PreconditionerBundle>,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    let mut diff = vec![0.0; d];
    for i in 0..n {
        for j in (i + 1)..n {
            for k in 0..d {
                diff[k] = points[i * d + k] - points[j * d + k];
            }
            out.push(match metric {
                Some(b) => b.q().quad_form(&diff),
                None => diff.iter().map(|v| v * v).sum(),
            });
        }
    }
    out
}

/// Median trick: median pairwise squared distance divided by `log(n + 1)`.
///
/// Distances are Mahalanobis under `metric` when given. Falls back to 1.0
/// when the median distance is zero.
pub fn median_bandwidth(
    points: &ParticleSet,
    metric: Option<&PreconditionerBundle>,
) -> Result<f64> {
    let (n, d) = (points.len(), points.dim());
    if n < 2 {
        return Err(Error::invalid("the median trick needs at least two points"));
    }
    if let Some(b) = metric {
        if b.dim() != d {
            return Err(Error::invalid("metric dimension does not match the points"));
        }
    }
    let flat = points.to_row_major();
    Ok(median_to_bandwidth(
        median_of(pairwise_sq(&flat, n, d, metric)),
        n,
    ))
}

/// Per-coordinate median trick for the diagonal kernel.
pub fn median_bandwidths_per_coordinate(points: &ParticleSet) -> Result<Vec<f64>> {
    let (n, d) = (points.len(), points.dim());
    if n < 2 {
        return Err(Error::invalid("the median trick needs at least two points"));
    }
    let pos = points.positions();
    Ok((0..d)
        .map(|k| {
            let mut sq = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                for j in (i + 1)..n {
                    let v = pos[(i, k)] - pos[(j, k)];
                    sq.push(v * v);
                }
            }
            median_to_bandwidth(median_of(sq), n)
        })
        .collect())
}

/// Update directions `φ(x_i)`, one row per particle.
#[derive(Debug, Clone, PartialEq)]
pub struct SteinDirectionField {
    directions: DMatrix<f64>,
}

impl SteinDirectionField {
    pub fn new(directions: DMatrix<f64>) -> Self {
        SteinDirectionField { directions }
    }

    pub fn directions(&self) -> &DMatrix<f64> {
        &self.directions
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.directions
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.directions.row(i).iter().copied().collect()
    }

    /// Largest Euclidean norm over particles.
    pub fn max_norm(&self) -> f64 {
        self.directions
            .row_iter()
            .map(|r| r.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.directions.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelStrategy {
    ScalarRbf {
        bandwidth: Bandwidth,
    },
    ConstPrecond {
        bundle: PreconditionerBundle,
        bandwidth: Bandwidth,
    },
    Mixture {
        anchors: AnchorSet,
    },
    Diagonal {
        bandwidths: Bandwidth<Vec<f64>>,
    },
}

impl KernelStrategy {
    pub fn scalar_rbf(bandwidth: Bandwidth) -> Result<Self> {
        check_fixed(bandwidth.value())?;
        Ok(KernelStrategy::ScalarRbf { bandwidth })
    }

    pub fn const_precond(bundle: PreconditionerBundle, bandwidth: Bandwidth) -> Result<Self> {
        check_fixed(bandwidth.value())?;
        Ok(KernelStrategy::ConstPrecond { bundle, bandwidth })
    }

    pub fn mixture(anchors: AnchorSet) -> Self {
        KernelStrategy::Mixture { anchors }
    }

    pub fn diagonal(bandwidths: Bandwidth<Vec<f64>>) -> Result<Self> {
        if let Bandwidth::Fixed(h) = &bandwidths {
            if h.is_empty() {
                return Err(Error::invalid(
                    "diagonal kernel needs one bandwidth per coordinate",
                ));
            }
            check_fixed(h)?;
        }
        Ok(KernelStrategy::Diagonal { bandwidths })
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelStrategy::ScalarRbf { .. } => "scalar_rbf",
            KernelStrategy::ConstPrecond { .. } => "const_precond",
            KernelStrategy::Mixture { .. } => "mixture_precond",
            KernelStrategy::Diagonal { .. } => "diagonal",
        }
    }

    /// Dimension fixed by the strategy's parameters, if any.
    fn dim(&self) -> Option<usize> {
        match self {
            KernelStrategy::ScalarRbf { .. } => None,
            KernelStrategy::ConstPrecond { bundle, .. } => Some(bundle.dim()),
            KernelStrategy::Mixture { anchors } => Some(anchors.dim()),
            KernelStrategy::Diagonal { bandwidths } => bandwidths.value().map(Vec::len),
        }
    }

    pub fn is_resolved(&self) -> bool {
        match self {
            KernelStrategy::ScalarRbf { bandwidth }
            | KernelStrategy::ConstPrecond { bandwidth, .. } => bandwidth.value().is_some(),
            KernelStrategy::Mixture { anchors } => {
                anchors.bandwidths.iter().all(|b| b.value().is_some())
            }
            KernelStrategy::Diagonal { bandwidths } => bandwidths.value().is_some(),
        }
    }

    /// Replaces every median-trick bandwidth by its value on `points`.
    /// Fixed bandwidths are left untouched.
    pub fn resolve(&mut self, points: &ParticleSet) -> Result<()> {
        if let Some(d) = self.dim() {
            if d != points.dim() {
                return Err(Error::invalid(format!(
                    "kernel has dimension {d}, particles have {}",
                    points.dim()
                )));
            }
        }
        let single = points.len() < 2;
        match self {
            KernelStrategy::ScalarRbf { bandwidth } => {
                if let Bandwidth::Median = bandwidth {
                    let h = if single {
                        1.0
                    } else {
                        median_bandwidth(points, None)?
                    };
                    *bandwidth = Bandwidth::Fixed(h);
                }
            }
            KernelStrategy::ConstPrecond { bundle, bandwidth } => {
                if let Bandwidth::Median = bandwidth {
                    let h = if single {
                        1.0
                    } else {
                        median_bandwidth(points, Some(bundle))?
                    };
                    *bandwidth = Bandwidth::Fixed(h);
                }
            }
            KernelStrategy::Mixture { anchors } => {
                for (bw, bundle) in anchors.bandwidths.iter_mut().zip(&anchors.bundles) {
                    if let Bandwidth::Median = bw {
                        let h = if single {
                            1.0
                        } else {
                            median_bandwidth(points, Some(bundle))?
                        };
                        *bw = Bandwidth::Fixed(h);
                    }
                }
            }
            KernelStrategy::Diagonal { bandwidths } => {
                if let Bandwidth::Median = bandwidths {
                    let h = if single {
                        vec![1.0; points.dim()]
                    } else {
                        median_bandwidths_per_coordinate(points)?
                    };
                    *bandwidths = Bandwidth::Fixed(h);
                }
            }
        }
        Ok(())
    }

    fn unresolved() -> Error {
        Error::Config(
            "kernel bandwidth is unresolved; call resolve() on the current particles first".into(),
        )
    }

    fn fixed(bw: &Bandwidth) -> Result<f64> {
        bw.value().copied().ok_or_else(Self::unresolved)
    }

    fn fixed_vec(bw: &Bandwidth<Vec<f64>>) -> Result<&[f64]> {
        bw.value().map(Vec::as_slice).ok_or_else(Self::unresolved)
    }

    /// `K(x, y)` as a `d × d` matrix.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
        check_dims(x, y, self.dim())?;
        let d = x.len();
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        match self {
            KernelStrategy::ScalarRbf { bandwidth } => {
                let h = Self::fixed(bandwidth)?;
                let k = (-sq_norm(&diff) / (2.0 * h)).exp();
                Ok(DMatrix::identity(d, d) * k)
            }
            KernelStrategy::ConstPrecond { bundle, bandwidth } => {
                let h = Self::fixed(bandwidth)?;
                let k = (-bundle.q().quad_form(&diff) / (2.0 * h)).exp();
                Ok(bundle.q_inv().as_matrix() * k)
            }
            KernelStrategy::Mixture { anchors } => {
                let wx = anchors.weights_unchecked(x);
                let wy = anchors.weights_unchecked(y);
                let mut out = DMatrix::zeros(d, d);
                for l in 0..anchors.len() {
                    let h = Self::fixed(&anchors.bandwidths[l])?;
                    let b = &anchors.bundles[l];
                    let k = (-b.q().quad_form(&diff) / (2.0 * h)).exp();
                    out += b.q_inv().as_matrix() * (wx[l] * wy[l] * k);
                }
                Ok(out)
            }
            KernelStrategy::Diagonal { bandwidths } => {
                let h = Self::fixed_vec(bandwidths)?;
                let diag: Vec<f64> = (0..d)
                    .map(|m| (-diff[m] * diff[m] / (2.0 * h[m])).exp())
                    .collect();
                Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)))
            }
        }
    }

    /// Closed-form `div_y K(x, y)`, the vector with entries `Σ_m ∂K_{ℓm}(x, y)/∂y_m`.
    pub fn divergence(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        check_dims(x, y, self.dim())?;
        let d = x.len();
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        match self {
            KernelStrategy::ScalarRbf { bandwidth } => {
                let h = Self::fixed(bandwidth)?;
                let k = (-sq_norm(&diff) / (2.0 * h)).exp();
                Ok(diff.iter().map(|v| k * v / h).collect())
            }
            KernelStrategy::ConstPrecond { bundle, bandwidth } => {
                let h = Self::fixed(bandwidth)?;
                let k = (-bundle.q().quad_form(&diff) / (2.0 * h)).exp();
                Ok(diff.iter().map(|v| k * v / h).collect())
            }
            KernelStrategy::Mixture { anchors } => {
                let wx = anchors.weights_unchecked(x);
                let (wy, gwy) = anchors.weights_and_grads_unchecked(y);
                let mut out = vec![0.0; d];
                for l in 0..anchors.len() {
                    let h = Self::fixed(&anchors.bandwidths[l])?;
                    let b = &anchors.bundles[l];
                    let k = (-b.q().quad_form(&diff) / (2.0 * h)).exp();
                    let kgw = b.q_inv().mul_vec(&gwy[l]);
                    for m in 0..d {
                        out[m] += wx[l] * (wy[l] * k * diff[m] / h + k * kgw[m]);
                    }
                }
                Ok(out)
            }
            KernelStrategy::Diagonal { bandwidths } => {
                let h = Self::fixed_vec(bandwidths)?;
                Ok((0..d)
                    .map(|m| (-diff[m] * diff[m] / (2.0 * h[m])).exp() * diff[m] / h[m])
                    .collect())
            }
        }
    }

    /// Block Gram matrix: the `(i, j)` block of size `d × d` is `K(x_i, x_j)`.
    pub fn gram_matrix(&self, points: &ParticleSet) -> Result<DMatrix<f64>> {
        let (n, d) = (points.len(), points.dim());
        let rows = points.rows();
        let mut g = DMatrix::zeros(n * d, n * d);
        for i in 0..n {
            for j in 0..n {
                let block = self.eval(&rows[i], &rows[j])?;
                g.view_mut((i * d, j * d), (d, d)).copy_from(&block);
            }
        }
        Ok(g)
    }

    /// Empirical Stein direction at every particle. `grads` holds
    /// `∇log p(x_j)` row-aligned with `particles`.
    pub fn stein_direction(
        &self,
        particles: &ParticleSet,
        grads: &DMatrix<f64>,
    ) -> Result<SteinDirectionField> {
        let (n, d) = (particles.len(), particles.dim());
        if grads.nrows() != n || grads.ncols() != d {
            return Err(Error::invalid(format!(
                "gradients are {}x{}, particles are {n}x{d}",
                grads.nrows(),
                grads.ncols()
            )));
        }
        if let Some(kd) = self.dim() {
            if kd != d {
                return Err(Error::invalid(format!(
                    "kernel has dimension {kd}, particles have {d}"
                )));
            }
        }
        if !self.is_resolved() {
            return Err(Self::unresolved());
        }
        let x = particles.to_row_major();
        let g: Vec<f64> = (0..n)
            .flat_map(|j| (0..d).map(move |k| grads[(j, k)]))
            .collect();
        let out = match self {
            KernelStrategy::ScalarRbf { bandwidth } => {
                scalar_direction(&x, &g, n, d, Self::fixed(bandwidth)?)
            }
            KernelStrategy::ConstPrecond { bundle, bandwidth } => {
                const_precond_direction(&x, &g, n, d, bundle, Self::fixed(bandwidth)?)
            }
            KernelStrategy::Mixture { anchors } => mixture_direction(&x, &g, n, d, anchors)?,
            KernelStrategy::Diagonal { bandwidths } => {
                diagonal_direction(&x, &g, n, d, Self::fixed_vec(bandwidths)?)
            }
        };
        Ok(SteinDirectionField::new(DMatrix::from_row_slice(
            n, d, &out,
        )))
    }
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

fn scalar_direction(x: &[f64], g: &[f64], n: usize, d: usize, h: f64) -> Vec<f64> {
    let mut out = vec![0.0; n * d];
    let mut diff = vec![0.0; d];
    for i in 0..n {
        let phi = &mut out[i * d..(i + 1) * d];
        for j in 0..n {
            for k in 0..d {
                diff[k] = x[i * d + k] - x[j * d + k];
            }
            let k = (-sq_norm(&diff) / (2.0 * h)).exp();
            for m in 0..d {
                phi[m] += k * g[j * d + m] + k * diff[m] / h;
            }
        }
        phi.iter_mut().for_each(|v| *v /= n as f64);
    }
    out
}

fn const_precond_direction(
    x: &[f64],
    g: &[f64],
    n: usize,
    d: usize,
    bundle: &PreconditionerBundle,
    h: f64,
) -> Vec<f64> {
    // Q⁻¹ ∇log p(x_j), precomputed once per particle.
    let pg: Vec<f64> = (0..n)
        .flat_map(|j| bundle.q_inv().mul_vec(&g[j * d..(j + 1) * d]))
        .collect();
    let mut out = vec![0.0; n * d];
    let mut diff = vec![0.0; d];
    for i in 0..n {
        let phi = &mut out[i * d..(i + 1) * d];
        for j in 0..n {
            for k in 0..d {
                diff[k] = x[i * d + k] - x[j * d + k];
            }
            let k = (-bundle.q().quad_form(&diff) / (2.0 * h)).exp();
            for m in 0..d {
                phi[m] += k * pg[j * d + m] + k * diff[m] / h;
            }
        }
        phi.iter_mut().for_each(|v| *v /= n as f64);
    }
    out
}

fn diagonal_direction(x: &[f64], g: &[f64], n: usize, d: usize, h: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * d];
    for i in 0..n {
        for j in 0..n {
            for m in 0..d {
                let diff = x[i * d + m] - x[j * d + m];
                let k = (-diff * diff / (2.0 * h[m])).exp();
                out[i * d + m] += k * g[j * d + m] + k * diff / h[m];
            }
        }
        for m in 0..d {
            out[i * d + m] /= n as f64;
        }
    }
    out
}

/// `φ(x_i) = Σ_ℓ w_ℓ(x_i) (1/n) Σ_j [ w_ℓ(x_j) K_ℓ ∇log p(x_j) + w_ℓ(x_j) div_j K_ℓ + K_ℓ ∇w_ℓ(x_j) ]`
/// with `K_ℓ = K_{Q_ℓ}(x_i, x_j)`.
fn mixture_direction(
    x: &[f64],
    g: &[f64],
    n: usize,
    d: usize,
    anchors: &AnchorSet,
) -> Result<Vec<f64>> {
    let m = anchors.len();
    let mut w = Vec::with_capacity(n);
    let mut gw = Vec::with_capacity(n);
    for j in 0..n {
        let (wj, gwj) = anchors.weights_and_grads_unchecked(&x[j * d..(j + 1) * d]);
        w.push(wj);
        gw.push(gwj);
    }
    let mut out = vec![0.0; n * d];
    let mut diff = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut u = vec![0.0; n * d];
    let mut acc = vec![0.0; d];
    for l in 0..m {
        let h = KernelStrategy::fixed(&anchors.bandwidths[l])?;
        let b = &anchors.bundles[l];
        // u_j = Q_ℓ⁻¹ (w_ℓ(x_j) ∇log p(x_j) + ∇w_ℓ(x_j))
        for j in 0..n {
            for k in 0..d {
                v[k] = w[j][l] * g[j * d + k] + gw[j][l][k];
            }
            b.q_inv().mul_vec_into(&v, &mut u[j * d..(j + 1) * d]);
        }
        for i in 0..n {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for j in 0..n {
                for k in 0..d {
                    diff[k] = x[i * d + k] - x[j * d + k];
                }
                let kq = (-b.q().quad_form(&diff) / (2.0 * h)).exp();
                let rep = w[j][l] * kq / h;
                for k in 0..d {
                    acc[k] += kq * u[j * d + k] + rep * diff[k];
                }
            }
            for k in 0..d {
                out[i * d + k] += w[i][l] * acc[k] / n as f64;
            }
        }
    }
    Ok(out)
}
