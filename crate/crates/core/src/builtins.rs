//! Named scenarios shipped with the engine.

use crate::expr::{parse_expr, Expr};
use crate::generator::{DomainClass, Generator, JumpChannel};
use crate::scalar::Scalar;
use crate::scenario::{
    Backend, CheckSpec, Direction, DualityFunction, Scenario, TestFunction, TimeGrid, Tolerances,
};
use crate::space::{StatePoint, StateSpace};
use crate::trajectory::{FlowMethod, Initial, ProcessLaw, Solver};

pub const BUILTINS: &[(&str, &str)] = &[
    (
        "counterexample",
        "flow pair on (0,inf) with a masked generator; the identity fails only at T = 1",
    ),
    (
        "counterexample-offgrid",
        "the counterexample on a grid that avoids T = 1",
    ),
    (
        "self-dual-zero",
        "symmetric two-state chain dual to itself; every curve vanishes",
    ),
    (
        "two-state-exact",
        "two different two-state chains, exact semigroup backend",
    ),
    (
        "two-state-mc",
        "the two-state pair estimated from 10^4 sampled paths per process",
    ),
    (
        "jump-mc",
        "reflecting random walk on {0..4}, self-dual, Monte Carlo backend",
    ),
    (
        "flow-ordered",
        "two linear flows with A1 psi >= A2 psi everywhere",
    ),
];

pub fn list_builtins() -> &'static [(&'static str, &'static str)] {
    BUILTINS
}

pub fn builtin<S: Scalar>(name: &str) -> Option<Scenario<S>> {
    Some(match name {
        "counterexample" => builtin_counterexample(),
        "counterexample-offgrid" => {
            let mut s = builtin_counterexample();
            s.name = name.into();
            s.grid = TimeGrid::uniform(S::lit(1.95), S::lit(0.15), S::lit(1e-3));
            s
        }
        "self-dual-zero" => self_dual_zero(),
        "two-state-exact" => two_state(Backend::ExactFiniteState),
        "two-state-mc" => two_state(Backend::MonteCarlo {
            replicas: 10_000,
            seed: 20_240_601,
        }),
        "jump-mc" => jump_mc(),
        "flow-ordered" => flow_ordered(),
        _ => return None,
    })
}

fn expr<S: Scalar>(src: &str) -> Expr<S> {
    parse_expr(src).expect("builtin expression")
}

/// `f_r(x) = exp(-r x)`.
pub fn exp_test_function<S: Scalar>(r: S) -> TestFunction<S> {
    let e = (-(Expr::Const(r) * Expr::x())).exp();
    TestFunction::new(format!("f_{r}"), e)
        .with_param(r)
        .with_bound(S::one())
}

/// `A₁ f = 1{r x ≠ e} x f'` and `A₂ f = x f'` on `span{exp(-r x)}`.
pub fn counterexample_generators<S: Scalar>() -> (Generator<S>, Generator<S>) {
    let a2 = Generator::flow(StateSpace::positive_half_line(), vec![Expr::x()])
        .with_domain(DomainClass::ExponentialFamily);
    let a1 = a2.clone().with_mask(expr("r * x - e"));
    (a1, a2)
}

fn flow_law<S: Scalar>(g: Generator<S>, x0: S) -> ProcessLaw<S> {
    ProcessLaw::new(
        g,
        Initial::Point(StatePoint::real1(x0)),
        Solver::ExactFlow(FlowMethod::ClosedForm),
    )
}

pub fn builtin_counterexample<S: Scalar>() -> Scenario<S> {
    let (a1, a2) = counterexample_generators();
    Scenario {
        name: "counterexample".into(),
        process1: flow_law(a1, S::one()),
        process2: flow_law(a2, S::one()),
        psi: DualityFunction::new(expr("exp(-x1 * x2)"), S::one()),
        grid: TimeGrid::uniform(S::lit(2.0), S::lit(0.05), S::lit(1e-3)),
        backend: Backend::ExactFlow,
        tolerances: Tolerances::default(),
        checks: CheckSpec {
            comparison: Some(Direction::AtLeast),
            test_functions: [0.5, 1.0, 2.0]
                .into_iter()
                .map(|r| exp_test_function(S::lit(r)))
                .collect(),
            integrated_horizon: None,
        },
    }
}

fn chain<S: Scalar>(q: [[f64; 2]; 2], start: usize, solver: Solver<S>) -> ProcessLaw<S> {
    let q = q
        .iter()
        .map(|row| row.iter().map(|&v| S::lit(v)).collect())
        .collect();
    ProcessLaw::new(
        Generator::rate_matrix(q),
        Initial::Point(StatePoint::Label(start)),
        solver,
    )
}

fn solver_for<S: Scalar>(backend: Backend) -> Solver<S> {
    match backend {
        Backend::ExactFlow => Solver::ExactFlow(FlowMethod::ClosedForm),
        Backend::ExactFiniteState => Solver::semigroup(),
        Backend::MonteCarlo { .. } => Solver::gillespie(),
    }
}

fn self_dual_zero<S: Scalar>() -> Scenario<S> {
    let solver = solver_for(Backend::ExactFiniteState);
    let q = [[-1.0, 1.0], [1.0, -1.0]];
    Scenario {
        name: "self-dual-zero".into(),
        process1: chain(q, 0, solver),
        process2: chain(q, 0, solver),
        psi: DualityFunction::new(expr("ind(x1 - x2)"), S::one()),
        grid: TimeGrid::uniform(S::lit(2.0), S::lit(0.1), S::lit(1e-3)),
        backend: Backend::ExactFiniteState,
        tolerances: Tolerances::default(),
        checks: CheckSpec {
            comparison: Some(Direction::AtLeast),
            ..CheckSpec::default()
        },
    }
}

fn two_state<S: Scalar>(backend: Backend) -> Scenario<S> {
    let solver = solver_for(backend);
    let (name, inner) = match backend {
        Backend::MonteCarlo { .. } => ("two-state-mc", 0.01),
        _ => ("two-state-exact", 1e-3),
    };
    Scenario {
        name: name.into(),
        process1: chain([[-1.0, 1.0], [2.0, -2.0]], 0, solver),
        process2: chain([[-0.5, 0.5], [1.5, -1.5]], 1, solver),
        psi: DualityFunction::new(expr("ind(x1 - x2)"), S::one()),
        grid: TimeGrid::uniform(S::lit(2.0), S::lit(0.1), S::lit(inner)),
        backend,
        tolerances: Tolerances::default(),
        checks: CheckSpec::default(),
    }
}

fn jump_mc<S: Scalar>() -> Scenario<S> {
    let walk = Generator::pure_jump(
        StateSpace::finite(["0", "1", "2", "3", "4"]),
        vec![
            JumpChannel {
                rate: expr("1 - ind(x - 4)"),
                target: vec![expr("x + 1")],
            },
            JumpChannel {
                rate: expr("1 - ind(x)"),
                target: vec![expr("x - 1")],
            },
        ],
    );
    let law = |start| {
        ProcessLaw::new(
            walk.clone(),
            Initial::Point(StatePoint::Label(start)),
            Solver::gillespie(),
        )
    };
    Scenario {
        name: "jump-mc".into(),
        process1: law(0),
        process2: law(3),
        psi: DualityFunction::new(expr("ind(x1 - x2)"), S::one()),
        grid: TimeGrid::uniform(S::lit(2.0), S::lit(0.1), S::lit(0.01)),
        backend: Backend::MonteCarlo {
            replicas: 10_000,
            seed: 7,
        },
        tolerances: Tolerances::default(),
        checks: CheckSpec::default(),
    }
}

/// Drifts `x/2` and `x` with `Ψ = exp(-x1 x2)`, so `R = x1 x2 exp(-x1 x2) / 2 ≥ 0`.
fn flow_ordered<S: Scalar>() -> Scenario<S> {
    let space = StateSpace::positive_half_line;
    Scenario {
        name: "flow-ordered".into(),
        process1: flow_law(Generator::flow(space(), vec![expr("0.5 * x")]), S::one()),
        process2: flow_law(Generator::flow(space(), vec![Expr::x()]), S::lit(0.5)),
        psi: DualityFunction::new(expr("exp(-x1 * x2)"), S::one()),
        grid: TimeGrid::uniform(S::lit(2.0), S::lit(0.1), S::lit(1e-3)),
        backend: Backend::ExactFlow,
        tolerances: Tolerances::default(),
        checks: CheckSpec {
            comparison: Some(Direction::AtLeast),
            ..CheckSpec::default()
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::validate_scenario;

    #[test]
    fn every_builtin_validates() {
        assert!(list_builtins().iter().any(|(n, _)| *n == "counterexample"));
        for (name, _) in list_builtins() {
            let s = builtin::<f64>(name).unwrap();
            assert_eq!(s.name, *name);
            let report = validate_scenario(&s);
            assert!(report.is_ok(), "{name}: {:?}", report.violations);
        }
        assert!(builtin::<f64>("nope").is_none());
    }
}
