//! Declarative scenarios binding two process laws to a duality function.

use std::fmt;

use crate::error::DualityError;
use crate::expr::{Env, Expr, Family, Var};
use crate::generator::build_actions;
use crate::scalar::Scalar;
use crate::space::{StatePoint, StateSpace};
use crate::trajectory::{ProcessLaw, Solver};

/// Number of quasi-random pairs used to check the bound of `Ψ`.
pub const BOUND_SAMPLES: u64 = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction<S> {
    pub id: String,
    /// Expression in `x` (and `r` when `param` is set).
    pub expr: Expr<S>,
    /// Value bound to `r` when evaluating.
    pub param: Option<S>,
    pub bound: Option<S>,
}

impl<S: Scalar> TestFunction<S> {
    pub fn new(id: impl Into<String>, expr: Expr<S>) -> Self {
        TestFunction {
            id: id.into(),
            expr,
            param: None,
            bound: None,
        }
    }

    pub fn with_param(mut self, r: S) -> Self {
        self.param = Some(r);
        self
    }

    pub fn with_bound(mut self, bound: S) -> Self {
        self.bound = Some(bound);
        self
    }

    pub fn eval(&self, x: &StatePoint<S>) -> crate::Result<S> {
        let c = x.coords();
        self.expr.eval(&Env::single(&c).with_r(self.param))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualityFunction<S> {
    /// Expression in `x1` and `x2`.
    pub expr: Expr<S>,
    pub bound: S,
}

impl<S: Scalar> DualityFunction<S> {
    pub fn new(expr: Expr<S>, bound: S) -> Self {
        DualityFunction { expr, bound }
    }

    pub fn eval(&self, x1: &StatePoint<S>, x2: &StatePoint<S>) -> crate::Result<S> {
        let (c1, c2) = (x1.coords(), x2.coords());
        self.expr.eval(&Env::pair(&c1, &c2))
    }

    /// `Ψ∘swap`, i.e. `(x₁, x₂) ↦ Ψ(x₂, x₁)`.
    pub fn swapped(&self) -> Self {
        DualityFunction {
            expr: self.expr.swap_pair(),
            bound: self.bound,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid<S> {
    pub points: Vec<S>,
    /// Step of the inner `t`-integral.
    pub inner_step: S,
}

impl<S: Scalar> TimeGrid<S> {
    /// `0, step, 2 step, …` up to `horizon`; the last point is `horizon` itself.
    pub fn uniform(horizon: S, step: S, inner_step: S) -> Self {
        let n = (horizon / step).round().to_usize().unwrap_or(0).max(1);
        let mut points: Vec<S> = (0..n).map(|k| S::from_usize_lossy(k) * step).collect();
        points.push(horizon);
        TimeGrid { points, inner_step }
    }

    pub fn horizon(&self) -> S {
        self.points.last().copied().unwrap_or_else(S::zero)
    }

    /// Uniform spacing if the points were generated by [`TimeGrid::uniform`].
    pub fn uniform_step(&self) -> Option<S> {
        let n = self.points.len().checked_sub(1)?;
        if n == 0 {
            return None;
        }
        let step = self.points[1];
        (TimeGrid::uniform(self.horizon(), step, self.inner_step).points == self.points)
            .then_some(step)
    }

    pub fn min_spacing(&self) -> S {
        self.points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(S::infinity(), S::min)
    }

    /// Midpoints inserted and the inner step halved.
    pub fn refined(&self) -> Self {
        let mut points = Vec::with_capacity(2 * self.points.len());
        for w in self.points.windows(2) {
            points.push(w[0]);
            points.push((w[0] + w[1]) / S::lit(2.0));
        }
        points.extend(self.points.last());
        TimeGrid {
            points,
            inner_step: self.inner_step / S::lit(2.0),
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if self.points.len() < 2 {
            return Err("grid needs at least the points 0 and the horizon".into());
        }
        if self.points.iter().any(|t| !t.is_finite()) {
            return Err("grid points must be finite".into());
        }
        if !self.points[0].is_zero() {
            return Err(format!("grid must start at 0, not {}", self.points[0]));
        }
        if self.points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err("grid points must be strictly increasing".into());
        }
        if !(self.inner_step > S::zero()) {
            return Err(format!("inner step {} must be positive", self.inner_step));
        }
        if self.inner_step > self.min_spacing() {
            return Err(format!(
                "inner step {} exceeds the grid spacing {}",
                self.inner_step,
                self.min_spacing()
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    ExactFlow,
    ExactFiniteState,
    MonteCarlo { replicas: usize, seed: u64 },
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::ExactFlow => "exact-flow",
            Backend::ExactFiniteState => "exact-finite-state",
            Backend::MonteCarlo { .. } => "monte-carlo",
        }
    }

    pub fn is_exact(&self) -> bool {
        !matches!(self, Backend::MonteCarlo { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances<S> {
    pub abs_tol: S,
    pub rel_tol: S,
    /// `|h| ≤ singular_eps` counts as `h = 0` for atom constraints.
    pub singular_eps: S,
}

impl<S: Scalar> Default for Tolerances<S> {
    fn default() -> Self {
        Tolerances {
            abs_tol: S::lit(1e-10),
            rel_tol: S::lit(1e-6),
            singular_eps: S::lit(1e-9),
        }
    }
}

/// Direction of the comparison `E[Ψ(X¹_T, X²_0)]` vs `E[Ψ(X¹_0, X²_T)]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    AtLeast,
    AtMost,
}

impl Direction {
    pub fn symbol(self) -> &'static str {
        match self {
            Direction::AtLeast => "ge",
            Direction::AtMost => "le",
        }
    }

    pub fn reversed(self) -> Self {
        match self {
            Direction::AtLeast => Direction::AtMost,
            Direction::AtMost => Direction::AtLeast,
        }
    }

    /// Whether `value` respects the direction up to `slack`.
    pub fn holds<S: Scalar>(self, value: S, slack: S) -> bool {
        match self {
            Direction::AtLeast => value >= -slack,
            Direction::AtMost => value <= slack,
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ge" | ">=" => Ok(Direction::AtLeast),
            "le" | "<=" => Ok(Direction::AtMost),
            other => Err(format!("unknown comparison direction {other:?} (use ge or le)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct CheckSpec<S> {
    pub comparison: Option<Direction>,
    /// Test functions for the martingale residual; defaults are derived
    /// from the generators when empty.
    pub test_functions: Vec<TestFunction<S>>,
    /// Upper limit of the integrated identity; the grid horizon by default.
    pub integrated_horizon: Option<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario<S> {
    pub name: String,
    pub process1: ProcessLaw<S>,
    pub process2: ProcessLaw<S>,
    pub psi: DualityFunction<S>,
    pub grid: TimeGrid<S>,
    pub backend: Backend,
    pub tolerances: Tolerances<S>,
    pub checks: CheckSpec<S>,
}

impl<S: Scalar> Scenario<S> {
    /// The pair with roles exchanged and `Ψ∘swap`; its gap and error term
    /// are the negatives of the original ones.
    pub fn swapped(&self) -> Self {
        Scenario {
            name: format!("{}-swapped", self.name),
            process1: self.process2.clone(),
            process2: self.process1.clone(),
            psi: self.psi.swapped(),
            checks: CheckSpec {
                comparison: self.checks.comparison.map(Direction::reversed),
                ..self.checks.clone()
            },
            ..self.clone()
        }
    }

    pub fn replicas(&self) -> Option<(usize, u64)> {
        match self.backend {
            Backend::MonteCarlo { replicas, seed } => Some((replicas, seed)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub code: String,
    pub message: String,
}

impl Violation {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Violation {
            code: code.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.code, self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn codes(&self) -> Vec<&str> {
        self.violations.iter().map(|v| v.code.as_str()).collect()
    }

    pub fn into_result(self) -> crate::Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(DualityError::Validation(self.violations))
        }
    }
}

fn solver_fits<S: Scalar>(p: &ProcessLaw<S>) -> bool {
    use crate::generator::GeneratorKind as K;
    matches!(
        (&p.generator.kind, &p.solver),
        (K::Flow { .. }, Solver::ExactFlow(_))
            | (K::RateMatrix { .. }, Solver::Semigroup { .. })
            | (K::RateMatrix { .. } | K::PureJump { .. }, Solver::Gillespie { .. })
    )
}

fn backend_fits<S: Scalar>(backend: Backend, p: &ProcessLaw<S>) -> bool {
    match backend {
        Backend::ExactFlow => matches!(p.solver, Solver::ExactFlow(_)),
        Backend::ExactFiniteState => matches!(p.solver, Solver::Semigroup { .. }),
        Backend::MonteCarlo { .. } => matches!(p.solver, Solver::Gillespie { .. }),
    }
}

/// Pairs of states on which `Ψ` is checked: exhaustive for finite × finite,
/// quasi-random otherwise.
pub(crate) fn sample_pairs<S: Scalar>(
    s1: &StateSpace<S>,
    s2: &StateSpace<S>,
    count: u64,
) -> Vec<(StatePoint<S>, StatePoint<S>)> {
    if let (Some(a), Some(b)) = (s1.enumerate(), s2.enumerate()) {
        return a
            .iter()
            .flat_map(|x| b.iter().map(move |y| (x.clone(), y.clone())))
            .collect();
    }
    let d1 = s1.dim();
    (1..=count)
        .map(|i| (s1.quasi_random_point(i, 0), s2.quasi_random_point(i, d1)))
        .collect()
}

/// Structural and sampled checks of a scenario. Never fails; problems are
/// returned as coded violations.
pub fn validate_scenario<S: Scalar>(s: &Scenario<S>) -> ValidationReport {
    let mut out = Vec::new();
    let mut push = |code: &str, msg: String| out.push(Violation::new(code, msg));

    let mut processes_ok = true;
    for (k, p) in [(1, &s.process1), (2, &s.process2)] {
        if let Err(e) = p.generator.check() {
            push("generator-invalid", format!("generator {k}: {e}"));
            processes_ok = false;
        }
        if let Err(e) = p.check_initial() {
            push("initial-invalid", format!("process {k}: {e}"));
            processes_ok = false;
        }
        if !solver_fits(p) {
            push(
                "solver-incompatible",
                format!(
                    "process {k}: solver {} cannot solve a {} generator",
                    p.solver.name(),
                    p.generator.kind_name()
                ),
            );
        }
        if !backend_fits(s.backend, p) {
            push(
                "backend-incompatible",
                format!(
                    "backend {} cannot run process {k} with solver {}",
                    s.backend.name(),
                    p.solver.name()
                ),
            );
        }
    }
    if let Backend::MonteCarlo { replicas, .. } = s.backend {
        if replicas == 0 {
            push("backend-incompatible", "Monte Carlo needs at least one replica".into());
        }
    }
    if let Err(e) = s.grid.check() {
        push("grid-malformed", e);
    }
    let t = &s.tolerances;
    for (name, v) in [("abs_tol", t.abs_tol), ("rel_tol", t.rel_tol), ("singular_eps", t.singular_eps)] {
        if !(v > S::zero()) || !v.is_finite() {
            push("tolerance-invalid", format!("{name} = {v} must be positive"));
        }
    }
    if let Some(h) = s.checks.integrated_horizon {
        if !(h > S::zero() && h <= s.grid.horizon()) {
            push("grid-malformed", format!("integrated horizon {h} is outside the grid"));
        }
    }

    let (space1, space2) = (&s.process1.generator.space, &s.process2.generator.space);
    let psi = &s.psi.expr;
    let mut psi_ok = true;
    if psi.mentions_family(Family::X) || psi.mentions(Var::R) || psi.mentions(Var::T) {
        push("space-mismatch", format!("psi {psi} may only use x1 and x2"));
        psi_ok = false;
    }
    for (family, space, k) in [(Family::X1, space1, 1), (Family::X2, space2, 2)] {
        if let Some(i) = psi.max_index(family) {
            if i >= space.dim() {
                push(
                    "space-mismatch",
                    format!("psi uses coordinate {i} of x{k}, space {k} has dimension {}", space.dim()),
                );
                psi_ok = false;
            }
        }
    }
    if psi.has_indicator() && !(space1.is_finite() && space2.is_finite()) {
        push(
            "psi-indicator",
            "indicators in psi are only allowed when both spaces are finite".into(),
        );
        psi_ok = false;
    }
    if !(s.psi.bound >= S::zero()) {
        push("bound-exceeded", format!("psi bound {} must be nonnegative", s.psi.bound));
        psi_ok = false;
    }
    if psi_ok && processes_ok {
        if let Err(e) = build_actions(&s.process1.generator, &s.process2.generator, &s.psi) {
            push("psi-not-in-domain", e.to_string());
        }
        let mut worst: Option<(S, String)> = None;
        for (x1, x2) in sample_pairs(space1, space2, BOUND_SAMPLES) {
            match s.psi.eval(&x1, &x2) {
                Ok(v) if v.abs() > s.psi.bound => {
                    if worst.as_ref().is_none_or(|w| v.abs() > w.0) {
                        worst = Some((v.abs(), format!("|psi({x1:?}, {x2:?})| = {}", v.abs())));
                    }
                }
                Ok(_) => {}
                Err(e) => {
                    push("psi-eval", format!("psi undefined at ({x1:?}, {x2:?}): {e}"));
                    break;
                }
            }
        }
        if let Some((_, msg)) = worst {
            push("bound-exceeded", format!("{msg} exceeds the bound {}", s.psi.bound));
        }
    }
    ValidationReport { violations: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::builtin_counterexample;
    use crate::trajectory::flow_state;

    #[test]
    fn counterexample_is_valid() {
        let s = builtin_counterexample::<f64>();
        let report = validate_scenario(&s);
        assert!(report.is_ok(), "{:?}", report.violations);
        let one = StatePoint::real1(1.0);
        assert!((s.psi.eval(&one, &one).unwrap() - 0.36787944117144233).abs() < 1e-15);
        assert_eq!(s.psi.bound, 1.0);
        let x = flow_state(&s.process1, 1.0).unwrap();
        assert!((x.coords()[0] - std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn zero_bound_is_exceeded() {
        let mut s = builtin_counterexample::<f64>();
        s.psi.bound = 0.0;
        assert_eq!(validate_scenario(&s).codes(), vec!["bound-exceeded"]);
    }

    #[test]
    fn monte_carlo_rejects_flows() {
        let mut s = builtin_counterexample::<f64>();
        s.backend = Backend::MonteCarlo { replicas: 100, seed: 1 };
        let report = validate_scenario(&s);
        assert!(report.codes().contains(&"backend-incompatible"));
    }

    #[test]
    fn grid_shapes() {
        let g = TimeGrid::uniform(2.0, 0.05, 1e-3);
        assert_eq!(g.points.len(), 41);
        assert_eq!(g.points[20], 1.0);
        assert_eq!(g.uniform_step(), Some(0.05));
        assert!(g.check().is_ok());
        let r = g.refined();
        assert_eq!(r.points.len(), 81);
        assert!(r.check().is_ok());
        let bad = TimeGrid { points: vec![0.0, 0.5, 0.5, 1.0], inner_step: 1e-3 };
        assert!(bad.check().is_err());
        let coarse = TimeGrid { points: vec![0.0, 0.01], inner_step: 0.1 };
        assert!(coarse.check().is_err());
    }

    #[test]
    fn swap_negates_roles() {
        let s = builtin_counterexample::<f64>();
        let w = s.swapped();
        assert_eq!(w.process1, s.process2);
        let (a, b) = (StatePoint::real1(0.3), StatePoint::real1(2.0));
        assert_eq!(w.psi.eval(&a, &b).unwrap(), s.psi.eval(&b, &a).unwrap());
    }
}
