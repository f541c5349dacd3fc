//! Numerical verification of duality relations between Markov processes
//! given as solutions of martingale problems.
//!
//! The core is generic over the scalar type; `f64` aliases are provided at
//! the crate root.

pub mod builtins;
pub mod checks;
pub mod error;
pub mod estimator;
pub mod expr;
pub mod generator;
pub mod quadrature;
pub mod runner;
pub mod scalar;
pub mod scenario;
pub mod space;
pub mod summation;
pub mod trajectory;

pub use error::{DualityError, Result};
pub use scalar::Scalar;

pub type Expr64 = expr::Expr<f64>;
pub type Generator64 = generator::Generator<f64>;
pub type ErrorTerm64 = generator::ErrorTerm<f64>;
pub type StateSpace64 = space::StateSpace<f64>;
pub type StatePoint64 = space::StatePoint<f64>;
pub type TestFunction64 = scenario::TestFunction<f64>;
pub type DualityFunction64 = scenario::DualityFunction<f64>;
pub type TimeGrid64 = scenario::TimeGrid<f64>;
pub type Scenario64 = scenario::Scenario<f64>;
pub type ProcessLaw64 = trajectory::ProcessLaw<f64>;
pub type Trajectory64 = trajectory::Trajectory<f64>;
