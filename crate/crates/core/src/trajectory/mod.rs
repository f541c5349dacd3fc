//! Solutions of martingale problems: deterministic flows, exact finite-state
//! distribution evolution and seeded jump-path sampling.

mod flow;
mod gillespie;
mod semigroup;

pub use flow::{affine_catalog, flow_path_exprs, flow_state, rk4_flow, AffineFlow};
pub use gillespie::{sample_path, write_jump_dump, StreamId, Trajectory, TrajectoryKind};
pub use semigroup::{evolve_distribution, uniformize, DistributionSnapshot};

use crate::error::{DualityError, Result};
use crate::generator::{Generator, GeneratorKind};
use crate::scalar::Scalar;
use crate::space::StatePoint;

pub const DEFAULT_JUMP_CAP: usize = 1_000_000;
pub const DEFAULT_TRUNCATION_TOL: f64 = 1e-13;
pub const DEFAULT_RK4_STEP: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub enum Initial<S> {
    Point(StatePoint<S>),
    /// Probability vector over the labels of a finite space.
    Distribution(Vec<S>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FlowMethod<S> {
    /// Analytic solution when the drift is in the catalog, RK4 otherwise.
    ClosedForm,
    Rk4 { step: S },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Solver<S> {
    ExactFlow(FlowMethod<S>),
    Semigroup { truncation_tol: S },
    Gillespie { jump_cap: usize },
}

impl<S: Scalar> Solver<S> {
    pub fn name(&self) -> &'static str {
        match self {
            Solver::ExactFlow(FlowMethod::ClosedForm) => "closed-form",
            Solver::ExactFlow(FlowMethod::Rk4 { .. }) => "rk4",
            Solver::Semigroup { .. } => "semigroup",
            Solver::Gillespie { .. } => "gillespie",
        }
    }

    pub fn semigroup() -> Self {
        Solver::Semigroup {
            truncation_tol: S::lit(DEFAULT_TRUNCATION_TOL),
        }
    }

    pub fn gillespie() -> Self {
        Solver::Gillespie {
            jump_cap: DEFAULT_JUMP_CAP,
        }
    }
}

/// A process given as a solution of the martingale problem for its generator.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessLaw<S> {
    pub generator: Generator<S>,
    pub initial: Initial<S>,
    pub solver: Solver<S>,
}

impl<S: Scalar> ProcessLaw<S> {
    pub fn new(generator: Generator<S>, initial: Initial<S>, solver: Solver<S>) -> Self {
        ProcessLaw {
            generator,
            initial,
            solver,
        }
    }

    pub fn check_initial(&self) -> Result<(), String> {
        match &self.initial {
            Initial::Point(p) => {
                if self.generator.space.contains(p) {
                    Ok(())
                } else {
                    Err(format!("initial point {p:?} is outside the state space"))
                }
            }
            Initial::Distribution(probs) => {
                let n = self
                    .generator
                    .space
                    .cardinality()
                    .ok_or("an initial distribution needs a finite state space")?;
                if probs.len() != n {
                    return Err(format!("initial distribution has {} entries, space has {n}", probs.len()));
                }
                if probs.iter().any(|p| !(*p >= S::zero())) {
                    return Err("initial distribution has a negative entry".into());
                }
                let total = probs.iter().fold(S::zero(), |a, &p| a + p);
                if (total - S::one()).abs() > S::lit(1e-12) {
                    return Err(format!("initial distribution sums to {total}"));
                }
                Ok(())
            }
        }
    }

    pub fn initial_point(&self) -> Result<&StatePoint<S>> {
        match &self.initial {
            Initial::Point(p) => Ok(p),
            Initial::Distribution(_) => Err(DualityError::Unsupported(
                "process starts from a distribution, not a point".into(),
            )),
        }
    }

    /// Initial law as a probability vector (finite spaces only).
    pub fn initial_distribution(&self) -> Result<Vec<S>> {
        let n = self.generator.space.cardinality().ok_or_else(|| {
            DualityError::Unsupported("initial distribution of a non-finite space".into())
        })?;
        Ok(match &self.initial {
            Initial::Distribution(p) => p.clone(),
            Initial::Point(StatePoint::Label(i)) => {
                let mut p = vec![S::zero(); n];
                p[*i] = S::one();
                p
            }
            Initial::Point(StatePoint::Real(_)) => {
                return Err(DualityError::Domain("real point on a finite space".into()))
            }
        })
    }

    pub fn is_flow(&self) -> bool {
        matches!(self.generator.kind, GeneratorKind::Flow { .. })
    }

    pub fn rate_matrix(&self) -> Option<&Vec<Vec<S>>> {
        match &self.generator.kind {
            GeneratorKind::RateMatrix { q } => Some(q),
            _ => None,
        }
    }
}

/// Law of `X_t` as a finite list of weighted points (exact backends).
pub fn exact_law<S: Scalar>(p: &ProcessLaw<S>, t: S) -> Result<Vec<(S, StatePoint<S>)>> {
    match p.solver {
        Solver::ExactFlow(_) => Ok(vec![(S::one(), flow_state(p, t)?)]),
        Solver::Semigroup { .. } => {
            let snap = evolve_distribution(p, t)?;
            Ok(snap
                .probs
                .into_iter()
                .enumerate()
                .map(|(i, w)| (w, StatePoint::Label(i)))
                .collect())
        }
        Solver::Gillespie { .. } => Err(DualityError::Unsupported(
            "sampled processes have no exact law".into(),
        )),
    }
}
