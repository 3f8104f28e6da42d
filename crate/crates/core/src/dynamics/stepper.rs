//! Step-size rules: Adagrad and a fixed step.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::particles::ParticleSet;

pub const DEFAULT_DAMPING: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMethod {
    Adagrad,
    Fixed,
}

/// Per-run stepper: base rate `ε`, damping `δ` and the Adagrad accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct StepperState {
    method: StepMethod,
    rate: f64,
    damping: f64,
    accumulators: DMatrix<f64>,
}

impl StepperState {
    pub fn new(method: StepMethod, rate: f64, damping: f64, n: usize, d: usize) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::invalid(format!(
                "step rate must be positive and finite, got {rate}"
            )));
        }
        if !(damping > 0.0 && damping.is_finite()) {
            return Err(Error::invalid(format!(
                "damping must be positive and finite, got {damping}"
            )));
        }
        Ok(StepperState {
            method,
            rate,
            damping,
            accumulators: DMatrix::zeros(n, d),
        })
    }

    pub fn adagrad(rate: f64, n: usize, d: usize) -> Result<Self> {
        Self::new(StepMethod::Adagrad, rate, DEFAULT_DAMPING, n, d)
    }

    pub fn fixed(rate: f64, n: usize, d: usize) -> Result<Self> {
        Self::new(StepMethod::Fixed, rate, DEFAULT_DAMPING, n, d)
    }

    pub fn method(&self) -> StepMethod {
        self.method
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    pub fn accumulators(&self) -> &DMatrix<f64> {
        &self.accumulators
    }

    /// Displacements for `directions` without touching any state.
    fn displacement(&self, directions: &DMatrix<f64>, acc: &DMatrix<f64>) -> DMatrix<f64> {
        match self.method {
            StepMethod::Fixed => directions * self.rate,
            StepMethod::Adagrad => {
                directions.zip_map(acc, |g, a| self.rate * g / (a.sqrt() + self.damping))
            }
        }
    }

    /// Moves `particles` along `directions` and advances the iteration counter.
    ///
    /// Adagrad: `acc += dir²`, then `x += ε · dir / (√acc + δ)`. Fixed: `x += ε · dir`.
    /// Nothing is modified when the step would produce non-finite values.
    pub fn step(&mut self, particles: &mut ParticleSet, directions: &DMatrix<f64>) -> Result<()> {
        let shape = (particles.len(), particles.dim());
        if directions.shape() != shape || self.accumulators.shape() != shape {
            return Err(Error::invalid(format!(
                "directions are {:?}, accumulators {:?}, particles {shape:?}",
                directions.shape(),
                self.accumulators.shape()
            )));
        }
        let iteration = particles.iteration();
        if directions.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                iteration,
                message: "non-finite update direction".into(),
            });
        }
        let acc = match self.method {
            StepMethod::Adagrad => self.accumulators.zip_map(directions, |a, g| a + g * g),
            StepMethod::Fixed => self.accumulators.clone(),
        };
        let moved = particles.positions() + self.displacement(directions, &acc);
        if moved.iter().any(|v| !v.is_finite()) || acc.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                iteration,
                message: "particle positions became non-finite".into(),
            });
        }
        self.accumulators = acc;
        *particles.positions_mut() = moved;
        particles.set_iteration(iteration + 1);
        Ok(())
    }
}

/// Functional form of [`StepperState::step`].
pub fn adagrad_step(
    state: &StepperState,
    particles: &ParticleSet,
    directions: &DMatrix<f64>,
) -> Result<(ParticleSet, StepperState)> {
    let (mut p, mut s) = (particles.clone(), state.clone());
    s.step(&mut p, directions)?;
    Ok((p, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(x: &[f64]) -> ParticleSet {
        ParticleSet::from_rows(&[x.to_vec()]).unwrap()
    }

    #[test]
    fn zero_direction_is_a_no_op() {
        let s = StepperState::adagrad(0.1, 1, 2).unwrap();
        let (p, s2) = adagrad_step(&s, &one(&[1.0, 2.0]), &DMatrix::zeros(1, 2)).unwrap();
        assert_eq!(p.positions(), one(&[1.0, 2.0]).positions());
        assert_eq!(s2.accumulators(), s.accumulators());
        assert_eq!(p.iteration(), 1);
    }

    #[test]
    fn first_adagrad_step() {
        let s = StepperState::adagrad(0.1, 1, 1).unwrap();
        let (p, s2) = adagrad_step(&s, &one(&[0.0]), &DMatrix::from_element(1, 1, 2.0)).unwrap();
        assert!((p.point(0)[0] - 0.1 * 2.0 / (2.0 + 1e-6)).abs() < 1e-15);
        assert_eq!(s2.accumulators()[(0, 0)], 4.0);
        let (_, s3) = adagrad_step(&s2, &p, &DMatrix::from_element(1, 1, -1.0)).unwrap();
        assert_eq!(s3.accumulators()[(0, 0)], 5.0);
    }

    #[test]
    fn fixed_step() {
        let s = StepperState::fixed(0.5, 1, 2).unwrap();
        let (p, _) = adagrad_step(
            &s,
            &one(&[0.0, 0.0]),
            &DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .unwrap();
        assert_eq!(p.point(0), vec![0.5, 0.0]);
    }

    #[test]
    fn rejects_non_finite_and_bad_shapes() {
        let mut s = StepperState::adagrad(0.1, 1, 1).unwrap();
        let mut p = one(&[0.0]);
        let err = s
            .step(&mut p, &DMatrix::from_element(1, 1, f64::NAN))
            .unwrap_err();
        assert!(matches!(err, Error::Numerical { iteration: 0, .. }));
        assert_eq!(p.point(0), vec![0.0]);
        assert!(s.step(&mut p, &DMatrix::zeros(2, 1)).is_err());
        let mut f = StepperState::fixed(1e308, 1, 1).unwrap();
        assert!(f.step(&mut p, &DMatrix::from_element(1, 1, 1e10)).is_err());
        assert!(StepperState::adagrad(0.0, 1, 1).is_err());
    }
}
