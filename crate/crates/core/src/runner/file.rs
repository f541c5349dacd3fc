//! TOML scenario files.
//!
//! ```toml
//! name = "two-state"
//!
//! [space1]
//! kind = "finite"              # finite | box | positive-half-line
//! labels = ["a", "b"]          # or n = 2
//!
//! [generator1]
//! kind = "rate-matrix"         # flow | rate-matrix | pure-jump
//! q = [[-1.0, 1.0], [2.0, -2.0]]
//! solver = "semigroup"         # closed-form | rk4 | semigroup | gillespie
//!
//! [initial1]
//! point = "a"                  # label, label index, number or array
//!
//! [psi]
//! expr = "ind(x1 - x2)"
//! bound = 1.0
//!
//! [grid]
//! horizon = 2.0
//! step = 0.1
//! inner_step = 1e-3
//!
//! [backend]
//! kind = "exact-finite-state"  # exact-flow | exact-finite-state | monte-carlo
//! ```
//!
//! `space2`, `generator2` and `initial2` follow the same layout. Optional
//! tables: `[tolerances]` (`abs_tol`, `rel_tol`, `singular_eps`) and
//! `[checks]` (`comparison = "ge" | "le"`, `integrated_horizon`,
//! `[[checks.test_functions]]` with `id`, `expr`, `param`, `bound`).

use std::ops::Range;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::error::{DualityError, Result};
use crate::expr::{parse_expr, Expr};
use crate::generator::{DomainClass, Generator, GeneratorKind, JumpChannel, SingularMask};
use crate::scalar::Scalar;
use crate::scenario::{
    Backend, CheckSpec, Direction, DualityFunction, Scenario, TestFunction, TimeGrid, Tolerances,
};
use crate::space::{StatePoint, StateSpace};
use crate::trajectory::{FlowMethod, Initial, ProcessLaw, Solver, DEFAULT_JUMP_CAP, DEFAULT_RK4_STEP};

const DEFAULT_INNER_STEP: f64 = 1e-3;

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    name: String,
    space1: Spanned<SpaceDoc>,
    space2: Spanned<SpaceDoc>,
    generator1: Spanned<GeneratorDoc>,
    generator2: Spanned<GeneratorDoc>,
    initial1: Spanned<InitialDoc>,
    initial2: Spanned<InitialDoc>,
    psi: Spanned<PsiDoc>,
    grid: Spanned<GridDoc>,
    backend: Spanned<BackendDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tolerances: Option<Spanned<TolerancesDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    checks: Option<Spanned<ChecksDoc>>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct SpaceDoc {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    upper: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lower_open: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    upper_open: Option<Vec<bool>>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct GeneratorDoc {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    solver: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rk4_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truncation_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    jump_cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    drift: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    channels: Option<Vec<ChannelDoc>>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ChannelDoc {
    rate: String,
    target: Vec<String>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct InitialDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    point: Option<toml::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    distribution: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct PsiDoc {
    expr: String,
    bound: f64,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct GridDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    points: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inner_step: Option<f64>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct BackendDoc {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    replicas: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct TolerancesDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    abs_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    singular_eps: Option<f64>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ChecksDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    comparison: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    integrated_horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    test_functions: Vec<TestFunctionDoc>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct TestFunctionDoc {
    id: String,
    expr: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    param: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bound: Option<f64>,
}

/// One-based line and column of a byte offset.
pub fn line_column(src: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(src.len());
    let before = &src[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

struct Ctx<'a> {
    src: &'a str,
}

impl Ctx<'_> {
    fn err(&self, span: &Range<usize>, message: impl Into<String>) -> DualityError {
        let (line, column) = line_column(self.src, span.start);
        DualityError::Parse {
            line,
            column,
            message: message.into(),
        }
    }

    fn expr<S: Scalar>(&self, span: &Range<usize>, what: &str, src: &str) -> Result<Expr<S>> {
        parse_expr(src).map_err(|e| self.err(span, format!("{what} '{src}': {e}")))
    }
}

fn lit<S: Scalar>(v: f64) -> S {
    S::lit(v)
}

fn lits<S: Scalar>(v: &[f64]) -> Vec<S> {
    v.iter().map(|&x| S::lit(x)).collect()
}

/// Parses a scenario file; errors carry the line and column of the
/// offending table or value.
pub fn parse_scenario<S: Scalar>(src: &str) -> Result<Scenario<S>> {
    let doc: ScenarioDoc = toml::from_str(src).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_column(src, s.start));
        DualityError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let cx = Ctx { src };
    let backend = backend(&cx, &doc.backend)?;
    let space1 = space::<S>(&cx, &doc.space1)?;
    let space2 = space::<S>(&cx, &doc.space2)?;
    let process1 = process(&cx, space1, &doc.generator1, &doc.initial1, backend)?;
    let process2 = process(&cx, space2, &doc.generator2, &doc.initial2, backend)?;
    let psi_span = doc.psi.span();
    let psi = DualityFunction::new(cx.expr(&psi_span, "psi", &doc.psi.get_ref().expr)?, lit(doc.psi.get_ref().bound));
    let tolerances = match &doc.tolerances {
        None => Tolerances::default(),
        Some(t) => {
            let d = Tolerances::<S>::default();
            let t = t.get_ref();
            Tolerances {
                abs_tol: t.abs_tol.map_or(d.abs_tol, lit),
                rel_tol: t.rel_tol.map_or(d.rel_tol, lit),
                singular_eps: t.singular_eps.map_or(d.singular_eps, lit),
            }
        }
    };
    Ok(Scenario {
        name: doc.name,
        process1,
        process2,
        psi,
        grid: grid(&cx, &doc.grid)?,
        backend,
        tolerances,
        checks: match &doc.checks {
            None => CheckSpec::default(),
            Some(c) => checks(&cx, c)?,
        },
    })
}

fn space<S: Scalar>(cx: &Ctx<'_>, doc: &Spanned<SpaceDoc>) -> Result<StateSpace<S>> {
    let span = doc.span();
    let d = doc.get_ref();
    match d.kind.as_str() {
        "finite" => match (&d.labels, d.n) {
            (Some(labels), None) => Ok(StateSpace::finite(labels.iter().cloned())),
            (None, Some(n)) => Ok(StateSpace::finite_n(n)),
            _ => Err(cx.err(&span, "a finite space needs exactly one of 'labels' or 'n'")),
        },
        "positive-half-line" => Ok(StateSpace::positive_half_line()),
        "box" => {
            let (Some(lower), Some(upper)) = (&d.lower, &d.upper) else {
                return Err(cx.err(&span, "a box needs 'lower' and 'upper'"));
            };
            let dim = lower.len();
            let flags = |v: &Option<Vec<bool>>| v.clone().unwrap_or_else(|| vec![false; dim]);
            Ok(StateSpace::RealBox {
                lower: lits(lower),
                upper: lits(upper),
                lower_open: flags(&d.lower_open),
                upper_open: flags(&d.upper_open),
            })
        }
        other => Err(cx.err(&span, format!("unknown space kind '{other}'"))),
    }
}

fn backend(cx: &Ctx<'_>, doc: &Spanned<BackendDoc>) -> Result<Backend> {
    let d = doc.get_ref();
    match d.kind.as_str() {
        "exact-flow" => Ok(Backend::ExactFlow),
        "exact-finite-state" => Ok(Backend::ExactFiniteState),
        "monte-carlo" => match (d.replicas, d.seed) {
            (Some(replicas), Some(seed)) => Ok(Backend::MonteCarlo { replicas, seed }),
            _ => Err(cx.err(&doc.span(), "monte-carlo needs 'replicas' and 'seed'")),
        },
        other => Err(cx.err(&doc.span(), format!("unknown backend '{other}'"))),
    }
}

fn process<S: Scalar>(
    cx: &Ctx<'_>,
    space: StateSpace<S>,
    gen: &Spanned<GeneratorDoc>,
    init: &Spanned<InitialDoc>,
    backend: Backend,
) -> Result<ProcessLaw<S>> {
    let span = gen.span();
    let d = gen.get_ref();
    let exprs = |what: &str, v: &[String]| -> Result<Vec<Expr<S>>> {
        v.iter().map(|s| cx.expr(&span, what, s)).collect()
    };
    let kind = match d.kind.as_str() {
        "flow" => {
            let drift = d.drift.as_deref().ok_or_else(|| cx.err(&span, "a flow needs 'drift'"))?;
            let mask = match &d.mask {
                Some(m) => Some(SingularMask {
                    constraint: cx.expr(&span, "mask", m)?,
                }),
                None => None,
            };
            GeneratorKind::Flow {
                drift: exprs("drift", drift)?,
                mask,
            }
        }
        "rate-matrix" => {
            let q = d.q.as_ref().ok_or_else(|| cx.err(&span, "a rate matrix needs 'q'"))?;
            GeneratorKind::RateMatrix {
                q: q.iter().map(|row| lits(row)).collect(),
            }
        }
        "pure-jump" => {
            let channels = d
                .channels
                .as_ref()
                .ok_or_else(|| cx.err(&span, "a pure-jump generator needs 'channels'"))?;
            GeneratorKind::PureJump {
                channels: channels
                    .iter()
                    .map(|c| {
                        Ok(JumpChannel {
                            rate: cx.expr(&span, "rate", &c.rate)?,
                            target: exprs("target", &c.target)?,
                        })
                    })
                    .collect::<Result<_>>()?,
            }
        }
        other => return Err(cx.err(&span, format!("unknown generator kind '{other}'"))),
    };
    let domain = match d.domain.as_deref() {
        None if matches!(kind, GeneratorKind::Flow { .. }) => DomainClass::Smooth,
        None => DomainClass::Bounded,
        Some("smooth") => DomainClass::Smooth,
        Some("exp-family") => DomainClass::ExponentialFamily,
        Some("bounded") => DomainClass::Bounded,
        Some(other) => return Err(cx.err(&span, format!("unknown domain class '{other}'"))),
    };
    let default_solver = match backend {
        Backend::ExactFlow => "closed-form",
        Backend::ExactFiniteState => "semigroup",
        Backend::MonteCarlo { .. } => "gillespie",
    };
    let solver = match d.solver.as_deref().unwrap_or(default_solver) {
        "closed-form" => Solver::ExactFlow(FlowMethod::ClosedForm),
        "rk4" => Solver::ExactFlow(FlowMethod::Rk4 {
            step: lit(d.rk4_step.unwrap_or(DEFAULT_RK4_STEP)),
        }),
        "semigroup" => match d.truncation_tol {
            Some(tol) => Solver::Semigroup { truncation_tol: lit(tol) },
            None => Solver::semigroup(),
        },
        "gillespie" => Solver::Gillespie {
            jump_cap: d.jump_cap.unwrap_or(DEFAULT_JUMP_CAP),
        },
        other => return Err(cx.err(&span, format!("unknown solver '{other}'"))),
    };
    let generator = Generator { space, kind, domain };
    let initial = initial(cx, &generator.space, init)?;
    Ok(ProcessLaw::new(generator, initial, solver))
}

fn initial<S: Scalar>(cx: &Ctx<'_>, space: &StateSpace<S>, doc: &Spanned<InitialDoc>) -> Result<Initial<S>> {
    let span = doc.span();
    let d = doc.get_ref();
    let number = |v: &toml::Value| match v {
        toml::Value::Float(x) => Some(*x),
        toml::Value::Integer(i) => Some(*i as f64),
        _ => None,
    };
    match (&d.point, &d.distribution) {
        (Some(p), None) => {
            let point = match (p, space) {
                (toml::Value::String(label), _) => StatePoint::Label(
                    space
                        .label_index(label)
                        .ok_or_else(|| cx.err(&span, format!("unknown label '{label}'")))?,
                ),
                (toml::Value::Integer(i), StateSpace::FiniteSet { .. }) => StatePoint::Label(
                    usize::try_from(*i).map_err(|_| cx.err(&span, "negative label index"))?,
                ),
                (toml::Value::Array(items), _) => StatePoint::Real(
                    items
                        .iter()
                        .map(|v| number(v).map(lit))
                        .collect::<Option<_>>()
                        .ok_or_else(|| cx.err(&span, "point coordinates must be numbers"))?,
                ),
                (v, _) => StatePoint::real1(lit(
                    number(v).ok_or_else(|| cx.err(&span, "malformed initial point"))?,
                )),
            };
            Ok(Initial::Point(point))
        }
        (None, Some(probs)) => Ok(Initial::Distribution(lits(probs))),
        _ => Err(cx.err(&span, "an initial law needs exactly one of 'point' or 'distribution'")),
    }
}

fn grid<S: Scalar>(cx: &Ctx<'_>, doc: &Spanned<GridDoc>) -> Result<TimeGrid<S>> {
    let d = doc.get_ref();
    let inner = lit(d.inner_step.unwrap_or(DEFAULT_INNER_STEP));
    match (d.horizon, d.step, &d.points) {
        (Some(h), Some(step), None) => Ok(TimeGrid::uniform(lit(h), lit(step), inner)),
        (None, None, Some(points)) => Ok(TimeGrid {
            points: lits(points),
            inner_step: inner,
        }),
        _ => Err(cx.err(&doc.span(), "a grid needs 'horizon' and 'step', or 'points'")),
    }
}

fn checks<S: Scalar>(cx: &Ctx<'_>, doc: &Spanned<ChecksDoc>) -> Result<CheckSpec<S>> {
    let span = doc.span();
    let d = doc.get_ref();
    let comparison = match &d.comparison {
        Some(c) => Some(c.parse::<Direction>().map_err(|e| cx.err(&span, e))?),
        None => None,
    };
    let test_functions = d
        .test_functions
        .iter()
        .map(|t| {
            let mut f = TestFunction::new(t.id.clone(), cx.expr(&span, "test function", &t.expr)?);
            f.param = t.param.map(lit);
            f.bound = t.bound.map(lit);
            Ok(f)
        })
        .collect::<Result<_>>()?;
    Ok(CheckSpec {
        comparison,
        test_functions,
        integrated_horizon: d.integrated_horizon.map(lit),
    })
}

fn spanned<T>(value: T) -> Spanned<T> {
    Spanned::new(0..0, value)
}

fn f<S: Scalar>(v: S) -> f64 {
    v.to_f64_lossy()
}

fn fs<S: Scalar>(v: &[S]) -> Vec<f64> {
    v.iter().map(|&x| f(x)).collect()
}

fn strings<S: Scalar>(v: &[Expr<S>]) -> Vec<String> {
    v.iter().map(ToString::to_string).collect()
}

fn space_doc<S: Scalar>(space: &StateSpace<S>) -> SpaceDoc {
    match space {
        StateSpace::FiniteSet { labels } => SpaceDoc {
            kind: "finite".into(),
            labels: Some(labels.clone()),
            ..SpaceDoc::default()
        },
        StateSpace::RealBox {
            lower,
            upper,
            lower_open,
            upper_open,
        } => SpaceDoc {
            kind: "box".into(),
            lower: Some(fs(lower)),
            upper: Some(fs(upper)),
            lower_open: Some(lower_open.clone()),
            upper_open: Some(upper_open.clone()),
            ..SpaceDoc::default()
        },
    }
}

fn generator_doc<S: Scalar>(p: &ProcessLaw<S>) -> GeneratorDoc {
    let g = &p.generator;
    let mut d = GeneratorDoc {
        kind: g.kind_name().into(),
        domain: Some(g.domain.name().into()),
        solver: Some(p.solver.name().into()),
        ..GeneratorDoc::default()
    };
    match p.solver {
        Solver::ExactFlow(FlowMethod::Rk4 { step }) => d.rk4_step = Some(f(step)),
        Solver::Semigroup { truncation_tol } => d.truncation_tol = Some(f(truncation_tol)),
        Solver::Gillespie { jump_cap } => d.jump_cap = Some(jump_cap),
        Solver::ExactFlow(FlowMethod::ClosedForm) => {}
    }
    match &g.kind {
        GeneratorKind::Flow { drift, mask } => {
            d.drift = Some(strings(drift));
            d.mask = mask.as_ref().map(|m| m.constraint.to_string());
        }
        GeneratorKind::RateMatrix { q } => d.q = Some(q.iter().map(|row| fs(row)).collect()),
        GeneratorKind::PureJump { channels } => {
            d.channels = Some(
                channels
                    .iter()
                    .map(|c| ChannelDoc {
                        rate: c.rate.to_string(),
                        target: strings(&c.target),
                    })
                    .collect(),
            )
        }
    }
    d
}

fn initial_doc<S: Scalar>(init: &Initial<S>) -> InitialDoc {
    match init {
        Initial::Point(StatePoint::Label(i)) => InitialDoc {
            point: Some(toml::Value::Integer(*i as i64)),
            distribution: None,
        },
        Initial::Point(StatePoint::Real(x)) => InitialDoc {
            point: Some(toml::Value::Array(fs(x).into_iter().map(toml::Value::Float).collect())),
            distribution: None,
        },
        Initial::Distribution(p) => InitialDoc {
            point: None,
            distribution: Some(fs(p)),
        },
    }
}

fn grid_doc<S: Scalar>(grid: &TimeGrid<S>) -> GridDoc {
    let uniform = grid
        .uniform_step()
        .filter(|&step| TimeGrid::uniform(grid.horizon(), step, grid.inner_step) == *grid);
    match uniform {
        Some(step) => GridDoc {
            horizon: Some(f(grid.horizon())),
            step: Some(f(step)),
            points: None,
            inner_step: Some(f(grid.inner_step)),
        },
        None => GridDoc {
            points: Some(fs(&grid.points)),
            inner_step: Some(f(grid.inner_step)),
            ..GridDoc::default()
        },
    }
}

/// Renders a scenario in the file format accepted by [`parse_scenario`].
pub fn scenario_to_toml<S: Scalar>(s: &Scenario<S>) -> Result<String> {
    let (replicas, seed) = s.replicas().unzip();
    let checks = &s.checks;
    let doc = ScenarioDoc {
        name: s.name.clone(),
        space1: spanned(space_doc(&s.process1.generator.space)),
        space2: spanned(space_doc(&s.process2.generator.space)),
        generator1: spanned(generator_doc(&s.process1)),
        generator2: spanned(generator_doc(&s.process2)),
        initial1: spanned(initial_doc(&s.process1.initial)),
        initial2: spanned(initial_doc(&s.process2.initial)),
        psi: spanned(PsiDoc {
            expr: s.psi.expr.to_string(),
            bound: f(s.psi.bound),
        }),
        grid: spanned(grid_doc(&s.grid)),
        backend: spanned(BackendDoc {
            kind: s.backend.name().into(),
            replicas,
            seed,
        }),
        tolerances: Some(spanned(TolerancesDoc {
            abs_tol: Some(f(s.tolerances.abs_tol)),
            rel_tol: Some(f(s.tolerances.rel_tol)),
            singular_eps: Some(f(s.tolerances.singular_eps)),
        })),
        checks: Some(spanned(ChecksDoc {
            comparison: checks.comparison.map(|d| d.symbol().to_string()),
            integrated_horizon: checks.integrated_horizon.map(f),
            test_functions: checks
                .test_functions
                .iter()
                .map(|t| TestFunctionDoc {
                    id: t.id.clone(),
                    expr: t.expr.to_string(),
                    param: t.param.map(f),
                    bound: t.bound.map(f),
                })
                .collect(),
        })),
    };
    toml::to_string(&doc).map_err(|e| DualityError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::{builtin, list_builtins};

    #[test]
    fn builtins_round_trip() {
        for (name, _) in list_builtins() {
            let s = builtin::<f64>(name).unwrap();
            let text = scenario_to_toml(&s).unwrap();
            let back: Scenario<f64> = parse_scenario(&text).unwrap_or_else(|e| panic!("{name}: {e}\n{text}"));
            assert_eq!(back, s, "{name}\n{text}");
        }
    }

    #[test]
    fn minimal_file() {
        let src = r#"
name = "pair"
[space1]
kind = "finite"
labels = ["a", "b"]
[space2]
kind = "finite"
n = 2
[generator1]
kind = "rate-matrix"
q = [[-1.0, 1.0], [2.0, -2.0]]
[generator2]
kind = "rate-matrix"
q = [[-1, 1], [1, -1]]
[initial1]
point = "b"
[initial2]
distribution = [0.5, 0.5]
[psi]
expr = "ind(x1 - x2)"
bound = 1
[grid]
horizon = 1.0
step = 0.25
[backend]
kind = "exact-finite-state"
"#;
        let s: Scenario<f64> = parse_scenario(src).unwrap();
        assert_eq!(s.process1.initial, Initial::Point(StatePoint::Label(1)));
        assert_eq!(s.process2.solver, Solver::semigroup());
        assert_eq!(s.grid.points.len(), 5);
        assert_eq!(s.grid.inner_step, 1e-3);
        assert!(crate::scenario::validate_scenario(&s).is_ok());
    }

    #[test]
    fn errors_point_at_the_problem() {
        let bad_syntax = "name = \"x\"\n[space1\nkind = 1";
        match parse_scenario::<f64>(bad_syntax) {
            Err(DualityError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let mut text = scenario_to_toml(&builtin::<f64>("two-state-exact").unwrap()).unwrap();
        text = text.replace("ind(x1 - x2)", "ind(x1 -)");
        let line = text.lines().position(|l| l.contains("ind(x1 -)")).unwrap() + 1;
        match parse_scenario::<f64>(&text) {
            Err(DualityError::Parse { line: l, message, .. }) => {
                assert!(l <= line && l + 3 >= line, "{l} vs {line}");
                assert!(message.contains("psi"));
            }
            other => panic!("{other:?}"),
        }
        let typo = scenario_to_toml(&builtin::<f64>("two-state-exact").unwrap())
            .unwrap()
            .replace("horizon", "horizn");
        assert!(matches!(parse_scenario::<f64>(&typo), Err(DualityError::Parse { .. })));
    }

    #[test]
    fn line_column_counts_from_one() {
        assert_eq!(line_column("ab\ncd", 0), (1, 1));
        assert_eq!(line_column("ab\ncd", 4), (2, 2));
    }
}
