//! Integration of singular atoms `v · 1{h = 0}` along exact flow paths.

use crate::error::Result;
use crate::expr::{Env, Expr, Poly, Var};
use crate::generator::Atom;
use crate::quadrature::{even_intervals, simpson_nonuniform, simpson_refined};
use crate::scalar::Scalar;
use crate::trajectory::{flow_path_exprs, flow_state, ProcessLaw};

/// Active measure and integral of one atom over `t ∈ [0, T]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Traced<S> {
    pub measure: S,
    pub value: S,
    pub refinement: S,
}

impl<S: Scalar> Traced<S> {
    fn none() -> Self {
        Traced {
            measure: S::zero(),
            value: S::zero(),
            refinement: S::zero(),
        }
    }
}

/// Substitutes `x1 ↦ path₁(t)` and `x2 ↦ path₂(T − t)` with `t` as [`Var::T`].
fn along_paths<S: Scalar>(e: &Expr<S>, p1: &[Expr<S>], p2: &[Expr<S>]) -> Expr<S> {
    e.substitute(&|v| match v {
        Var::X1(i) => p1.get(i).cloned(),
        Var::X2(i) => p2.get(i).cloned(),
        _ => None,
    })
}

fn eval_at<S: Scalar>(
    e: &Expr<S>,
    p1: &ProcessLaw<S>,
    p2: &ProcessLaw<S>,
    big_t: S,
    t: S,
) -> Result<S> {
    let a = flow_state(p1, t)?;
    let b = flow_state(p2, big_t - t)?;
    let (ca, cb) = (a.coords(), b.coords());
    e.eval(&Env::pair(&ca, &cb))
}

pub(crate) fn trace<S: Scalar>(
    atom: &Atom<S>,
    p1: &ProcessLaw<S>,
    p2: &ProcessLaw<S>,
    big_t: S,
    inner_step: S,
    eps: S,
) -> Result<Traced<S>> {
    if big_t <= S::zero() {
        return Ok(Traced::none());
    }
    let time = Expr::Var(Var::T);
    let back = Expr::Const(big_t) - Expr::Var(Var::T);
    let symbolic = match (flow_path_exprs(p1, &time), flow_path_exprs(p2, &back)) {
        (Some(path1), Some(path2)) => Some((
            along_paths(&atom.constraint, &path1, &path2),
            along_paths(&atom.value, &path1, &path2),
        )),
        _ => None,
    };
    integrate(
        symbolic,
        big_t,
        inner_step,
        eps,
        &|t| eval_at(&atom.constraint, p1, p2, big_t, t),
        &|t| eval_at(&atom.value, p1, p2, big_t, t),
    )
}

/// Integrates `v · 1{|h| ≤ eps}` over `[0, end]`.
///
/// `symbolic` holds `h` and `v` as expressions of [`Var::T`]; when `h`
/// canonicalizes to a constant the active set is all or nothing. Otherwise
/// maximal runs of active nodes spanning at least one step are integrated
/// and isolated roots contribute 0.
pub(crate) fn integrate<S: Scalar>(
    symbolic: Option<(Expr<S>, Expr<S>)>,
    end: S,
    step: S,
    eps: S,
    h_at: &dyn Fn(S) -> Result<S>,
    v_at: &dyn Fn(S) -> Result<S>,
) -> Result<Traced<S>> {
    if end <= S::zero() {
        return Ok(Traced::none());
    }
    if let Some((h, v)) = symbolic {
        let h = Poly::from_expr(&h);
        if !h.mentions(Var::T) {
            if let Some(c) = h.as_constant() {
                if c.abs() > eps {
                    return Ok(Traced::none());
                }
                let q = simpson_refined(S::zero(), end, step, |t| v.eval(&Env::default().with_t(t)))?;
                return Ok(Traced {
                    measure: end,
                    value: q.coarse,
                    refinement: q.discrepancy(),
                });
            }
        }
    }
    let n = even_intervals(S::zero(), end, step);
    let h = end / S::from_usize_lossy(n);
    let nodes: Vec<S> = (0..=n)
        .map(|j| if j == n { end } else { S::from_usize_lossy(j) * h })
        .collect();
    let mut active = Vec::with_capacity(nodes.len());
    for &t in &nodes {
        active.push(h_at(t)?.abs() <= eps);
    }
    let mut out = Traced::none();
    let mut j = 0;
    while j < nodes.len() {
        if !active[j] {
            j += 1;
            continue;
        }
        let start = j;
        while j + 1 < nodes.len() && active[j + 1] {
            j += 1;
        }
        if j > start {
            let ts = &nodes[start..=j];
            let vs = ts.iter().map(|&t| v_at(t)).collect::<Result<Vec<S>>>()?;
            out.measure = out.measure + (ts[ts.len() - 1] - ts[0]);
            out.value = out.value + simpson_nonuniform(ts, &vs);
        }
        j += 1;
    }
    Ok(out)
}
