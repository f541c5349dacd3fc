use rayon::prelude::*;

use crate::error::{DualityError, Result};
use crate::estimator::atoms::integrate;
use crate::expr::{Env, Expr, Family, Var};
use crate::generator::{DomainClass, GeneratorKind, MaskedExpr};
use crate::quadrature::simpson_refined;
use crate::scalar::Scalar;
use crate::scenario::{TestFunction, TimeGrid};
use crate::space::StatePoint;
use crate::summation::{mean, pairwise_sum, variance};
use crate::trajectory::{
    evolve_distribution, flow_path_exprs, flow_state, sample_path, ProcessLaw, Solver, StreamId,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualOptions<S> {
    /// Allowed drift of `M_t` along an exact flow.
    pub abs_tol: S,
    pub singular_eps: S,
    /// Step of the centered difference in the Kolmogorov check.
    pub kolmogorov_step: S,
    pub kolmogorov_tol: S,
    pub replicas: usize,
    pub seed: u64,
    /// Stream index of the process (1 or 2).
    pub process: u8,
}

impl<S: Scalar> Default for ResidualOptions<S> {
    fn default() -> Self {
        ResidualOptions {
            abs_tol: S::lit(1e-10),
            singular_eps: S::lit(1e-9),
            kolmogorov_step: S::lit(1e-5),
            kolmogorov_tol: S::lit(1e-6),
            replicas: 10_000,
            seed: 0,
            process: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResidualMethod {
    /// `M_t` along the deterministic path.
    Flow,
    /// `d/dt E[f(X_t)] − E[Af(X_t)]` under the exact law.
    Kolmogorov,
    /// Replica mean of `M_t − M_0` with a 99% interval.
    Sampled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MartingaleResidual<S> {
    pub test_function: String,
    pub method: ResidualMethod,
    pub times: Vec<S>,
    pub residuals: Vec<S>,
    /// 99% empirical Bernstein intervals of the sampled residuals.
    pub ci: Option<Vec<(S, S)>>,
    pub max_deviation: S,
    pub pass: bool,
}

/// `A f` with the family parameter fixed to the test function's value.
fn action<S: Scalar>(p: &ProcessLaw<S>, f: &TestFunction<S>) -> Result<MaskedExpr<S>> {
    let mut a = p.generator.apply_to(&f.expr, Family::X)?;
    if let Some(r) = f.param {
        let bind = |e: &Expr<S>| e.substitute(&|v| (v == Var::R).then_some(Expr::Const(r)));
        a.regular = bind(&a.regular);
        for atom in &mut a.atoms {
            atom.constraint = bind(&atom.constraint);
            atom.value = bind(&atom.value);
        }
    }
    Ok(a)
}

fn eval_x<S: Scalar>(e: &Expr<S>, x: &StatePoint<S>, r: Option<S>) -> Result<S> {
    let c = x.coords();
    e.eval(&Env::single(&c).with_r(r))
}

/// Checks that `M_t = f(X_t) − ∫₀ᵗ Af(X_s) ds` is a martingale.
pub fn martingale_residual<S: Scalar>(
    p: &ProcessLaw<S>,
    f: &TestFunction<S>,
    grid: &TimeGrid<S>,
    opts: &ResidualOptions<S>,
) -> Result<MartingaleResidual<S>> {
    let af = action(p, f)?;
    match p.solver {
        Solver::ExactFlow(_) => flow_residual(p, f, &af, grid, opts),
        Solver::Semigroup { .. } => kolmogorov_residual(p, f, &af, grid, opts),
        Solver::Gillespie { .. } => sampled_residual(p, f, &af, grid, opts),
    }
}

fn flow_residual<S: Scalar>(
    p: &ProcessLaw<S>,
    f: &TestFunction<S>,
    af: &MaskedExpr<S>,
    grid: &TimeGrid<S>,
    opts: &ResidualOptions<S>,
) -> Result<MartingaleResidual<S>> {
    let path = flow_path_exprs(p, &Expr::Var(Var::T));
    let along = |e: &Expr<S>| {
        path.as_ref().map(|xs| {
            e.substitute(&|v| match v {
                Var::X(i) => xs.get(i).cloned(),
                _ => None,
            })
        })
    };
    let at = |e: &Expr<S>, t: S| eval_x(e, &flow_state(p, t)?, f.param);
    let mut residuals = Vec::with_capacity(grid.points.len());
    for &t in &grid.points {
        let integral = simpson_refined(S::zero(), t, grid.inner_step, |s| at(&af.regular, s))?;
        let mut total = integral.coarse;
        for atom in &af.atoms {
            let symbolic = along(&atom.constraint).zip(along(&atom.value));
            let traced = integrate(
                symbolic,
                t,
                grid.inner_step,
                opts.singular_eps,
                &|s| at(&atom.constraint, s),
                &|s| at(&atom.value, s),
            )?;
            total = total + traced.value;
        }
        residuals.push(f.eval(&flow_state(p, t)?)? - total);
    }
    let m0 = residuals[0];
    let max_deviation = residuals
        .iter()
        .fold(S::zero(), |m, &r| m.max((r - m0).abs()));
    Ok(MartingaleResidual {
        test_function: f.id.clone(),
        method: ResidualMethod::Flow,
        times: grid.points.clone(),
        residuals,
        ci: None,
        max_deviation,
        pass: max_deviation <= opts.abs_tol,
    })
}

fn kolmogorov_residual<S: Scalar>(
    p: &ProcessLaw<S>,
    f: &TestFunction<S>,
    af: &MaskedExpr<S>,
    grid: &TimeGrid<S>,
    opts: &ResidualOptions<S>,
) -> Result<MartingaleResidual<S>> {
    let n = p
        .generator
        .space
        .cardinality()
        .ok_or_else(|| DualityError::Unsupported("Kolmogorov check needs a finite space".into()))?;
    let states: Vec<StatePoint<S>> = (0..n).map(StatePoint::Label).collect();
    let fv = states.iter().map(|x| f.eval(x)).collect::<Result<Vec<S>>>()?;
    let afv = states
        .iter()
        .map(|x| {
            let c = x.coords();
            af.eval(&Env::single(&c).with_r(f.param))
        })
        .collect::<Result<Vec<S>>>()?;
    let expect = |values: &[S], t: S| -> Result<S> {
        let probs = evolve_distribution(p, t)?.probs;
        Ok(pairwise_sum(&probs.iter().zip(values).map(|(&w, &v)| w * v).collect::<Vec<_>>()))
    };
    let h = opts.kolmogorov_step;
    let two = S::lit(2.0);
    let mut residuals = Vec::with_capacity(grid.points.len());
    for &t in &grid.points {
        let derivative = if t >= h {
            (expect(&fv, t + h)? - expect(&fv, t - h)?) / (two * h)
        } else {
            (S::lit(-3.0) * expect(&fv, t)? + S::lit(4.0) * expect(&fv, t + h)? - expect(&fv, t + two * h)?)
                / (two * h)
        };
        residuals.push(derivative - expect(&afv, t)?);
    }
    let max_deviation = residuals.iter().fold(S::zero(), |m, &r| m.max(r.abs()));
    Ok(MartingaleResidual {
        test_function: f.id.clone(),
        method: ResidualMethod::Kolmogorov,
        times: grid.points.clone(),
        residuals,
        ci: None,
        max_deviation,
        pass: max_deviation <= opts.kolmogorov_tol,
    })
}

fn sampled_residual<S: Scalar>(
    p: &ProcessLaw<S>,
    f: &TestFunction<S>,
    af: &MaskedExpr<S>,
    grid: &TimeGrid<S>,
    opts: &ResidualOptions<S>,
) -> Result<MartingaleResidual<S>> {
    if af.has_atoms() || matches!(p.generator.kind, GeneratorKind::Flow { .. }) {
        return Err(DualityError::Unsupported("sampled residuals need a jump process".into()));
    }
    let horizon = grid.horizon();
    let af_at = |x: &StatePoint<S>| {
        let c = x.coords();
        af.eval(&Env::single(&c).with_r(f.param))
    };
    let per_replica = (0..opts.replicas as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<S>> {
            let path = sample_path(p, horizon, StreamId::new(opts.seed, opts.process, i))?;
            let f0 = f.eval(&path.states[0])?;
            let mut out = Vec::with_capacity(grid.points.len());
            for &t in &grid.points {
                let mut parts = Vec::new();
                for (s, e, x) in path.segments() {
                    if s >= t {
                        break;
                    }
                    parts.push(af_at(x)? * (e.min(t) - s));
                }
                out.push(f.eval(path.state_at(t))? - f0 - pairwise_sum(&parts));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let spread = |v: &[S]| {
        let (lo, hi) = v
            .iter()
            .fold((S::infinity(), S::neg_infinity()), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        if lo <= hi { hi - lo } else { S::zero() }
    };
    let exact_spreads = match p.generator.space.enumerate() {
        Some(states) => {
            let fv = states.iter().map(|x| f.eval(x)).collect::<Result<Vec<_>>>()?;
            let av = states.iter().map(&af_at).collect::<Result<Vec<_>>>()?;
            Some((spread(&fv), spread(&av)))
        }
        None => None,
    };
    let n = per_replica.len();
    let log_term = S::lit((4.0 / (1.0 - RESIDUAL_LEVEL)).ln());
    let mut residuals = Vec::new();
    let mut ci = Vec::new();
    let mut pass = true;
    for (k, &t) in grid.points.iter().enumerate() {
        let column: Vec<S> = per_replica.iter().map(|r| r[k]).collect();
        let m = mean(&column);
        let range = match exact_spreads {
            Some((sf, sa)) => sf + t * sa,
            None => spread(&column),
        };
        let half = bernstein_half_width(variance(&column), range, n, log_term);
        pass &= m.abs() <= half + opts.abs_tol;
        residuals.push(m);
        ci.push((m - half, m + half));
    }
    let max_deviation = residuals.iter().fold(S::zero(), |m, &r| m.max(r.abs()));
    Ok(MartingaleResidual {
        test_function: f.id.clone(),
        method: ResidualMethod::Sampled,
        times: grid.points.clone(),
        residuals,
        ci: Some(ci),
        max_deviation,
        pass,
    })
}

/// Confidence level of the sampled residual intervals.
pub const RESIDUAL_LEVEL: f64 = 0.99;

/// Empirical Bernstein half-width for the mean of `n` variables with sample
/// variance `var` and range `range`; `log_term` is `ln(4/δ)`.
fn bernstein_half_width<S: Scalar>(var: S, range: S, n: usize, log_term: S) -> S {
    if n < 2 {
        return S::infinity();
    }
    let nf = S::from_usize_lossy(n);
    (S::lit(2.0) * var * log_term / nf).sqrt()
        + S::lit(7.0) * range * log_term / (S::lit(3.0) * (nf - S::one()))
}

/// Test functions used when a scenario declares none: state indicators on
/// finite spaces, `exp(-r x)` for `r ∈ {0.5, 1, 2}` on exponential-family
/// domains, and `exp(-Σ xᵢ)` for other flows.
pub fn default_test_functions<S: Scalar>(p: &ProcessLaw<S>) -> Vec<TestFunction<S>> {
    let space = &p.generator.space;
    if let Some(n) = space.cardinality() {
        return (0..n.min(8))
            .map(|a| {
                let e = Expr::Ind(Box::new(Expr::x() - Expr::Const(S::from_usize_lossy(a))));
                TestFunction::new(format!("ind_{a}"), e).with_bound(S::one())
            })
            .collect();
    }
    if p.generator.domain == DomainClass::ExponentialFamily {
        return [0.5, 1.0, 2.0]
            .into_iter()
            .map(|r| crate::builtins::exp_test_function(S::lit(r)))
            .collect();
    }
    let sum = (1..space.dim()).fold(Expr::x(), |acc, i| acc + Expr::Var(Var::X(i)));
    vec![TestFunction::new("exp_neg_sum", (-sum).exp())]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::{builtin_counterexample, exp_test_function};
    use crate::generator::Generator;
    use crate::trajectory::Initial;

    #[test]
    fn counterexample_residual_is_constant() {
        let s = builtin_counterexample::<f64>();
        for r in [0.5, 1.0, 2.0] {
            for p in [&s.process1, &s.process2] {
                let m = martingale_residual(p, &exp_test_function(r), &s.grid, &ResidualOptions::default())
                    .unwrap();
                assert!(m.pass, "r = {r}: {}", m.max_deviation);
                assert!((m.residuals[0] - (-r).exp()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_test_function() {
        let s = builtin_counterexample::<f64>();
        let c = TestFunction::new("c", Expr::lit(0.25));
        let m = martingale_residual(&s.process1, &c, &s.grid, &ResidualOptions::default()).unwrap();
        assert!(m.residuals.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn kolmogorov_on_two_states() {
        let p = ProcessLaw::new(
            Generator::rate_matrix(vec![vec![-1.0, 1.0], vec![1.0, -1.0]]),
            Initial::Point(StatePoint::Label(0)),
            Solver::semigroup(),
        );
        let f = TestFunction::new("ind_0", crate::expr::parse_expr("ind(x)").unwrap());
        let grid = TimeGrid::uniform(2.0, 0.1, 1e-3);
        let m = martingale_residual(&p, &f, &grid, &ResidualOptions::default()).unwrap();
        assert!(m.pass, "{}", m.max_deviation);
    }

    #[test]
    fn sampled_chain_residual() {
        let p = ProcessLaw::new(
            Generator::rate_matrix(vec![vec![-1.0, 1.0], vec![2.0, -2.0]]),
            Initial::Point(StatePoint::Label(0)),
            Solver::gillespie(),
        );
        let f = TestFunction::new("ind_0", crate::expr::parse_expr("ind(x)").unwrap());
        let grid = TimeGrid::uniform(2.0, 0.25, 1e-2);
        let opts = ResidualOptions { replicas: 4000, seed: 3, ..ResidualOptions::default() };
        let m = martingale_residual(&p, &f, &grid, &opts).unwrap();
        assert!(m.pass);
        assert_eq!(m.residuals[0], 0.0);
    }
}
