//! Particle evolution: preconditioner refresh, Newton-style metrics,
//! step-size rules and the update loop.

mod precond;
mod run;
mod stepper;
mod svn;
mod twin;

pub use precond::{averaged_preconditioner, refresh_anchors};
pub use run::{
    final_positions, run, Method, PrecondMode, PrecondPolicy, RunSettings, RunStatus, StepperSpec,
    Trajectory, CONVERGENCE_TOL, DEFAULT_CURVATURE_FLOOR,
};
pub use stepper::{adagrad_step, StepMethod, StepperState, DEFAULT_DAMPING};
pub use svn::{factor_metrics, svn_direction, svn_full_direction, svn_metrics, svn_step};
pub use twin::change_of_variables_twin;

#[cfg(test)]
mod tests;
