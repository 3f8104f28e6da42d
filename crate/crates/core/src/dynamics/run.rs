//! The particle update loop.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Bandwidth, KernelStrategy, SteinDirectionField};
use crate::particles::ParticleSet;
use crate::psdlin::PreconditionerBundle;
use crate::targets::{CurvatureMode, TargetModel};

use super::precond::{averaged_preconditioner, refresh_anchors};
use super::stepper::{StepMethod, StepperState};
use super::svn::{factor_metrics, gradient_matrix, svn_direction, svn_metrics};

/// Default eigenvalue floor for curvature preconditioners, relative to `max(1, λ_max)`.
pub const DEFAULT_CURVATURE_FLOOR: f64 = 1e-2;

/// Runs stop early once every particle's direction is shorter than this.
pub const CONVERGENCE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    VanillaSvgd,
    MatrixSvgdAverage,
    MatrixSvgdMixture,
    Svn,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::VanillaSvgd,
        Method::MatrixSvgdAverage,
        Method::MatrixSvgdMixture,
        Method::Svn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::VanillaSvgd => "vanilla_svgd",
            Method::MatrixSvgdAverage => "matrix_svgd_average",
            Method::MatrixSvgdMixture => "matrix_svgd_mixture",
            Method::Svn => "svn",
        }
    }

    pub fn from_name(name: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == name)
    }

    pub fn precond_mode(self) -> PrecondMode {
        match self {
            Method::VanillaSvgd => PrecondMode::None,
            Method::MatrixSvgdAverage => PrecondMode::Averaged,
            Method::MatrixSvgdMixture => PrecondMode::PerParticleAnchor,
            Method::Svn => PrecondMode::PerParticleMetric,
        }
    }

    pub fn uses_curvature(self) -> bool {
        self.precond_mode() != PrecondMode::None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecondMode {
    None,
    Averaged,
    PerParticleAnchor,
    PerParticleMetric,
}

/// Curvature source and how often preconditioners, anchors and bandwidths
/// are rebuilt. `curvature: None` uses the target's own mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecondPolicy {
    pub curvature: Option<CurvatureMode>,
    pub refresh_period: usize,
    /// Eigenvalue floor, relative to `max(1, λ_max)`, applied to curvature matrices.
    pub floor_ratio: f64,
}

impl Default for PrecondPolicy {
    fn default() -> Self {
        PrecondPolicy {
            curvature: None,
            refresh_period: 1,
            floor_ratio: DEFAULT_CURVATURE_FLOOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperSpec {
    pub method: StepMethod,
    pub rate: f64,
    pub damping: f64,
}

/// Everything a run needs, fully resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub model: TargetModel,
    pub method: Method,
    pub n: usize,
    pub iterations: usize,
    pub checkpoints: Vec<usize>,
    pub stepper: StepperSpec,
    pub precond: PrecondPolicy,
    pub bandwidth: Bandwidth,
    pub init_mean: Vec<f64>,
    pub init_scale: f64,
    pub seed: u64,
}

impl RunSettings {
    pub fn curvature(&self) -> CurvatureMode {
        self.precond
            .curvature
            .unwrap_or_else(|| self.model.default_curvature())
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.n == 0 {
            return cfg("particle count must be at least 1".into());
        }
        if self.init_mean.len() != self.model.dim() {
            return cfg(format!(
                "init mean has dimension {}, target has {}",
                self.init_mean.len(),
                self.model.dim()
            ));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite())
            || self.init_mean.iter().any(|v| !v.is_finite())
        {
            return cfg("initialization must be finite with a nonnegative scale".into());
        }
        if !(self.precond.floor_ratio > 0.0 && self.precond.floor_ratio < 1.0) {
            return cfg("floor ratio must lie in (0, 1)".into());
        }
        if self.precond.refresh_period == 0 {
            return cfg("refresh period must be at least 1".into());
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return cfg("checkpoints must be strictly increasing".into());
        }
        if self
            .checkpoints
            .last()
            .is_some_and(|&c| c > self.iterations)
        {
            return cfg(format!(
                "checkpoints exceed the iteration budget {}",
                self.iterations
            ));
        }
        if !(self.stepper.rate > 0.0 && self.stepper.rate.is_finite()) {
            return cfg("step rate must be positive".into());
        }
        if !(self.stepper.damping > 0.0 && self.stepper.damping.is_finite()) {
            return cfg("stepper damping must be positive".into());
        }
        if let Bandwidth::Fixed(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return cfg("fixed bandwidth must be positive".into());
            }
        }
        if self.method.uses_curvature() && !self.model.supports_curvature(self.curvature()) {
            return cfg(format!(
                "curvature mode {:?} is not supported by the {} target",
                self.curvature(),
                self.model.kind().name()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Converged { iteration: usize },
    Aborted { iteration: usize, message: String },
}

/// Snapshots at each reached checkpoint, in schedule order.
///
/// `wall_clock` holds seconds per executed iteration and is the only field
/// that varies between repeated runs.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub checkpoints: Vec<usize>,
    pub snapshots: Vec<ParticleSet>,
    pub status: RunStatus,
    pub iterations_run: usize,
    pub final_direction_norm: Option<f64>,
    pub wall_clock: Vec<f64>,
}

impl Trajectory {
    pub fn final_particles(&self) -> Option<&ParticleSet> {
        self.snapshots.last()
    }
}

/// Per-refresh state: the kernel plus SVN metrics when needed.
enum Geometry {
    Kernel(KernelStrategy),
    Newton {
        kernel: KernelStrategy,
        metrics: Vec<PreconditionerBundle>,
    },
}

fn build_geometry(
    settings: &RunSettings,
    particles: &ParticleSet,
    batch: Option<&[usize]>,
) -> Result<Geometry> {
    let mode = settings.curvature();
    let floor = settings.precond.floor_ratio;
    let bw = settings.bandwidth.clone();
    Ok(match settings.method {
        Method::VanillaSvgd => {
            let mut k = KernelStrategy::scalar_rbf(bw)?;
            k.resolve(particles)?;
            Geometry::Kernel(k)
        }
        Method::MatrixSvgdAverage => {
            let q = averaged_preconditioner(particles, &settings.model, mode, batch, floor)?;
            let mut k = KernelStrategy::const_precond(q, bw)?;
            k.resolve(particles)?;
            Geometry::Kernel(k)
        }
        Method::MatrixSvgdMixture => {
            let anchors = refresh_anchors(particles, &settings.model, mode, batch, &bw, floor)?;
            Geometry::Kernel(KernelStrategy::mixture(anchors))
        }
        Method::Svn => {
            let mut kernel = KernelStrategy::scalar_rbf(bw)?;
            kernel.resolve(particles)?;
            let h = match &kernel {
                KernelStrategy::ScalarRbf {
                    bandwidth: Bandwidth::Fixed(h),
                } => *h,
                _ => unreachable!("scalar kernel resolved above"),
            };
            let metrics = factor_metrics(
                &svn_metrics(particles, &settings.model, mode, batch, h, floor)?,
                floor,
            )?;
            Geometry::Newton { kernel, metrics }
        }
    })
}

fn direction(
    geometry: &Geometry,
    settings: &RunSettings,
    particles: &ParticleSet,
    batch: Option<&[usize]>,
) -> Result<SteinDirectionField> {
    let grads = gradient_matrix(particles, &settings.model, batch)?;
    match geometry {
        Geometry::Kernel(k) => k.stein_direction(particles, &grads),
        Geometry::Newton { kernel, metrics } => {
            svn_direction(&kernel.stein_direction(particles, &grads)?, metrics)
        }
    }
}

fn check_finite(field: &SteinDirectionField, iteration: usize) -> Result<()> {
    if field.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical {
            iteration,
            message: "non-finite update direction".into(),
        })
    }
}

/// Draws the initial particles and evolves them with synchronous updates.
///
/// Configuration problems are reported as errors before iteration 0.
/// Failures during iteration end the run with [`RunStatus::Aborted`] and
/// keep the snapshots reached so far.
pub fn run(settings: &RunSettings) -> Result<Trajectory> {
    settings.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut particles = ParticleSet::gaussian(
        settings.n,
        &settings.init_mean,
        settings.init_scale,
        &mut rng,
    )?;
    let (n, d) = (settings.n, settings.model.dim());
    let mut stepper = StepperState::new(
        settings.stepper.method,
        settings.stepper.rate,
        settings.stepper.damping,
        n,
        d,
    )?;

    let mut traj = Trajectory {
        checkpoints: settings.checkpoints.clone(),
        snapshots: Vec::with_capacity(settings.checkpoints.len()),
        status: RunStatus::Completed,
        iterations_run: 0,
        final_direction_norm: None,
        wall_clock: Vec::with_capacity(settings.iterations),
    };
    let record = |traj: &mut Trajectory, p: &ParticleSet, t: usize| {
        if settings.checkpoints.binary_search(&t).is_ok() {
            traj.snapshots.push(p.clone());
        }
    };
    record(&mut traj, &particles, 0);

    let mut geometry: Option<Geometry> = None;
    for t in 0..settings.iterations {
        let start = Instant::now();
        let batch = settings.model.draw_minibatch(&mut rng);
        let outcome = (|| -> Result<Option<f64>> {
            if t % settings.precond.refresh_period == 0 || geometry.is_none() {
                geometry = Some(build_geometry(settings, &particles, batch.as_deref())?);
            }
            let geo = geometry.as_ref().expect("geometry built above");
            let field = direction(geo, settings, &particles, batch.as_deref())?;
            check_finite(&field, t)?;
            let norm = field.max_norm();
            if norm < CONVERGENCE_TOL {
                return Ok(Some(norm));
            }
            stepper.step(&mut particles, field.directions())?;
            traj.final_direction_norm = Some(norm);
            Ok(None)
        })();
        traj.wall_clock.push(start.elapsed().as_secs_f64());
        match outcome {
            Ok(None) => {
                traj.iterations_run = t + 1;
                record(&mut traj, &particles, t + 1);
            }
            Ok(Some(norm)) => {
                traj.final_direction_norm = Some(norm);
                traj.status = RunStatus::Converged { iteration: t };
                let remaining = settings.checkpoints.iter().filter(|&&c| c > t).count();
                traj.snapshots
                    .extend(std::iter::repeat_n(particles.clone(), remaining));
                break;
            }
            Err(e @ (Error::Numerical { .. } | Error::Domain(_) | Error::InvalidInput(_))) => {
                let message = match e {
                    Error::Numerical { message, .. } => message,
                    other => other.to_string(),
                };
                traj.status = RunStatus::Aborted {
                    iteration: t,
                    message,
                };
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(traj)
}

/// Positions after `settings.iterations` steps, for callers that only need the end state.
pub fn final_positions(settings: &RunSettings) -> Result<DMatrix<f64>> {
    let mut s = settings.clone();
    s.checkpoints = vec![s.iterations];
    let traj = run(&s)?;
    traj.final_particles()
        .map(|p| p.positions().clone())
        .ok_or_else(|| Error::Numerical {
            iteration: traj.iterations_run,
            message: format!("run ended early: {:?}", traj.status),
        })
}
