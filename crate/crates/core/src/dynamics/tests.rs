use super::*;
use crate::kernels::Bandwidth;
use crate::metrics::MmdReference;
use crate::psdlin::SymMatrix;
use crate::targets::{
    CurvatureMode, Gaussian, LogisticDataset, LogisticPosterior, StarParams, TargetModel,
};
use nalgebra::DMatrix;

fn gaussian_model() -> TargetModel {
    let q = SymMatrix::from_row_slice(2, &[2.0, 0.6, 0.6, 1.0]).unwrap();
    TargetModel::Gaussian(Gaussian::with_precision(vec![1.0, -0.5], &q).unwrap())
}

fn settings(model: TargetModel, method: Method, iterations: usize) -> RunSettings {
    let d = model.dim();
    RunSettings {
        model,
        method,
        n: 20,
        iterations,
        checkpoints: vec![0, iterations],
        stepper: StepperSpec {
            method: StepMethod::Adagrad,
            rate: 0.1,
            damping: DEFAULT_DAMPING,
        },
        precond: PrecondPolicy::default(),
        bandwidth: Bandwidth::Median,
        init_mean: vec![0.0; d],
        init_scale: 1.0,
        seed: 7,
    }
}

fn logistic_model() -> TargetModel {
    let x = DMatrix::from_row_slice(
        6,
        2,
        &[
            1.0, 0.5, 0.8, -0.2, 1.5, 1.0, -1.0, 0.1, -0.7, -0.9, -1.2, 0.4,
        ],
    );
    let data = LogisticDataset::new(x, vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0], 3).unwrap();
    TargetModel::Logistic(LogisticPosterior::new(data))
}

#[test]
fn zero_iterations_returns_the_initial_particles() {
    let s = settings(gaussian_model(), Method::MatrixSvgdMixture, 0);
    let s = RunSettings {
        checkpoints: vec![0],
        ..s
    };
    let t = run(&s).unwrap();
    assert_eq!(t.snapshots.len(), 1);
    assert_eq!(t.iterations_run, 0);
    assert_eq!(t.status, RunStatus::Completed);
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(7);
    let init = crate::ParticleSet::gaussian(20, &[0.0, 0.0], 1.0, &mut rng).unwrap();
    assert_eq!(t.snapshots[0], init);
}

#[test]
fn runs_are_deterministic_for_every_method() {
    for method in Method::ALL {
        for model in [gaussian_model(), logistic_model()] {
            let s = settings(model, method, 15);
            let (a, b) = (run(&s).unwrap(), run(&s).unwrap());
            assert_eq!(a.snapshots, b.snapshots, "{}", method.name());
            assert_eq!(a.status, b.status);
            assert_eq!(a.snapshots.len(), 2);
        }
    }
}

#[test]
fn updates_are_order_independent() {
    // Permuting the initial particles permutes the result.
    for method in Method::ALL {
        let s = RunSettings {
            iterations: 10,
            checkpoints: vec![0, 10],
            ..settings(gaussian_model(), method, 10)
        };
        let base = run(&s).unwrap();
        let init = &base.snapshots[0];
        let mut rows = init.rows();
        rows.reverse();
        // Re-run the same dynamics by hand from the reversed set.
        let mut p = crate::ParticleSet::from_rows(&rows).unwrap();
        let mut stepper = StepperState::adagrad(0.1, 20, 2).unwrap();
        for _ in 0..10 {
            let dir = one_direction(&s, &p);
            stepper.step(&mut p, &dir).unwrap();
        }
        let fwd = base.snapshots[1].rows();
        let rev = p.rows();
        for i in 0..20 {
            for k in 0..2 {
                assert!(
                    (fwd[i][k] - rev[19 - i][k]).abs() < 1e-9,
                    "{}",
                    method.name()
                );
            }
        }
    }
}

fn one_direction(s: &RunSettings, p: &crate::ParticleSet) -> DMatrix<f64> {
    let mut single = s.clone();
    single.n = p.len();
    let mode = s.curvature();
    let grads = svn::gradient_matrix(p, &s.model, None).unwrap();
    match s.method {
        Method::Svn => svn_full_direction(p, &s.model, mode, None)
            .unwrap()
            .into_matrix(),
        Method::VanillaSvgd => {
            let mut k = crate::kernels::KernelStrategy::scalar_rbf(Bandwidth::Median).unwrap();
            k.resolve(p).unwrap();
            k.stein_direction(p, &grads).unwrap().into_matrix()
        }
        Method::MatrixSvgdAverage => {
            let q =
                averaged_preconditioner(p, &s.model, mode, None, s.precond.floor_ratio).unwrap();
            let mut k =
                crate::kernels::KernelStrategy::const_precond(q, Bandwidth::Median).unwrap();
            k.resolve(p).unwrap();
            k.stein_direction(p, &grads).unwrap().into_matrix()
        }
        Method::MatrixSvgdMixture => {
            let a = refresh_anchors(
                p,
                &s.model,
                mode,
                None,
                &Bandwidth::Median,
                s.precond.floor_ratio,
            )
            .unwrap();
            crate::kernels::KernelStrategy::mixture(a)
                .stein_direction(p, &grads)
                .unwrap()
                .into_matrix()
        }
    }
}

#[test]
fn small_fixed_steps_raise_the_mean_log_density() {
    let model = gaussian_model();
    for method in Method::ALL {
        let mut s = settings(model.clone(), method, 20);
        s.stepper = StepperSpec {
            method: StepMethod::Fixed,
            rate: 1e-3,
            damping: DEFAULT_DAMPING,
        };
        s.init_mean = vec![-2.0, 2.0];
        s.checkpoints = (0..=20).collect();
        let t = run(&s).unwrap();
        let energy: Vec<f64> = t
            .snapshots
            .iter()
            .map(|p| {
                p.rows()
                    .iter()
                    .map(|x| model.log_density(x).unwrap())
                    .sum::<f64>()
                    / p.len() as f64
            })
            .collect();
        assert!(
            energy.windows(2).all(|w| w[1] >= w[0]),
            "{}: {energy:?}",
            method.name()
        );
    }
}

#[test]
fn mmd_to_reference_drops_over_200_iterations() {
    let model = gaussian_model();
    let reference = MmdReference::new(&model.reference_sample(10_000, 1).unwrap(), 0.0).unwrap();
    for method in Method::ALL {
        let mut s = settings(model.clone(), method, 200);
        s.n = 30;
        s.init_mean = vec![-1.0, 1.0];
        let t = run(&s).unwrap();
        let first = reference.mmd_sq(&t.snapshots[0]).unwrap().value;
        let last = reference.mmd_sq(&t.snapshots[1]).unwrap().value;
        assert!(last < first, "{}: {first} → {last}", method.name());
    }
}

#[test]
fn convergence_fills_remaining_checkpoints() {
    // A single particle at the mode has a zero direction from the start.
    let model = TargetModel::Gaussian(Gaussian::standard(2));
    let mut s = settings(model, Method::VanillaSvgd, 50);
    s.n = 1;
    s.init_scale = 0.0;
    s.checkpoints = vec![0, 10, 50];
    let t = run(&s).unwrap();
    assert_eq!(t.status, RunStatus::Converged { iteration: 0 });
    assert_eq!(t.snapshots.len(), 3);
    assert!(t.snapshots.iter().all(|p| p.point(0) == vec![0.0, 0.0]));
}

#[test]
fn overflow_aborts_with_partial_snapshots() {
    let mut s = settings(gaussian_model(), Method::VanillaSvgd, 10);
    s.stepper = StepperSpec {
        method: StepMethod::Fixed,
        rate: 1e200,
        damping: DEFAULT_DAMPING,
    };
    s.init_mean = vec![5.0, 5.0];
    s.checkpoints = vec![0, 5, 10];
    let t = run(&s).unwrap();
    assert!(
        matches!(t.status, RunStatus::Aborted { .. }),
        "{:?}",
        t.status
    );
    assert!(!t.snapshots.is_empty() && t.snapshots.len() < 3);
    assert!(t.snapshots.iter().all(|p| p.is_finite()));
}

#[test]
fn configuration_errors_surface_before_iterating() {
    let mut s = settings(logistic_model(), Method::MatrixSvgdAverage, 5);
    s.precond.curvature = Some(CurvatureMode::ExactHessian);
    assert!(matches!(run(&s), Err(crate::Error::Config(_))));
    let mut s = settings(gaussian_model(), Method::VanillaSvgd, 5);
    s.checkpoints = vec![0, 6];
    assert!(matches!(run(&s), Err(crate::Error::Config(_))));
    s.checkpoints = vec![3, 3];
    assert!(run(&s).is_err());
    let mut s = settings(gaussian_model(), Method::VanillaSvgd, 5);
    s.init_mean = vec![0.0];
    assert!(run(&s).is_err());
    s = settings(
        TargetModel::star(StarParams::default()).unwrap(),
        Method::Svn,
        5,
    );
    s.precond.refresh_period = 0;
    assert!(run(&s).is_err());
}

#[test]
fn refresh_period_changes_the_trajectory_only_when_above_one() {
    let model = TargetModel::star(StarParams::default()).unwrap();
    let a = run(&settings(model.clone(), Method::MatrixSvgdMixture, 6)).unwrap();
    let mut s = settings(model, Method::MatrixSvgdMixture, 6);
    s.precond.refresh_period = 3;
    let b = run(&s).unwrap();
    assert_eq!(a.snapshots[0], b.snapshots[0]);
    assert_ne!(a.snapshots[1], b.snapshots[1]);
}
