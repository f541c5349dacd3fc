//! Invariant checks shared by the property suite and the acceptance target.
//! Each check takes fully specified inputs and returns a description of the
//! first violation.

#![allow(dead_code)]

use dualcheck::builtins::counterexample_generators;
use dualcheck::expr::{parse_expr, Env, Expr};
use dualcheck::generator::{
    apply_generator, build_error_term, phi, Generator, JumpChannel, Slot,
};
use dualcheck::scenario::{DualityFunction, TestFunction};
use dualcheck::space::{StatePoint, StateSpace};
use dualcheck::trajectory::{
    evolve_distribution, rk4_flow, sample_path, uniformize, Initial, ProcessLaw, Solver, StreamId,
};

pub type Check = Result<(), String>;

pub const SMOOTH_FUNCTIONS: &[&str] = &["exp(-x)", "x ^ 2", "1 / (1 + x)", "x * exp(-2 * x)", "ln(1 + x)"];
pub const FINITE_FUNCTIONS: &[&str] = &["exp(-x)", "x ^ 2", "ind(x - 1)", "1 / (1 + x)", "3"];
pub const DRIFTS: &[&str] = &["x", "0.5 * x + 1", "x / (1 + x)", "3 - x ^ 2", "-2 * x"];
pub const SMOOTH_PSI: &[&str] = &["exp(-x1 * x2)", "1 / (1 + x1 * x2)", "exp(-x1 - 2 * x2)", "exp(-(x1 - x2) ^ 2)"];
pub const FINITE_PSI: &[&str] = &["ind(x1 - x2)", "exp(-x1 * x2)", "1 / (1 + x1 + x2)"];

pub fn e(src: &str) -> Expr<f64> {
    parse_expr(src).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// Rate matrix from off-diagonal rates listed row by row.
pub fn rate_matrix(n: usize, off: &[f64]) -> Vec<Vec<f64>> {
    let mut q = vec![vec![0.0; n]; n];
    let mut k = 0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                q[i][j] = off[k % off.len()];
                k += 1;
            }
        }
        q[i][i] = -q[i].iter().sum::<f64>();
    }
    q
}

/// Reflecting walk on `0..n` with up rate `up` and down rate `down`.
pub fn walk(n: usize, up: f64, down: f64) -> Generator<f64> {
    let top = (n - 1) as f64;
    Generator::pure_jump(
        StateSpace::finite_n(n),
        vec![
            JumpChannel {
                rate: e(&format!("{up} * (1 - ind(x - {top}))")),
                target: vec![e("x + 1")],
            },
            JumpChannel {
                rate: e(&format!("{down} * (1 - ind(x))")),
                target: vec![e("x - 1")],
            },
        ],
    )
}

pub fn flow(drift: &str) -> Generator<f64> {
    Generator::flow(StateSpace::positive_half_line(), vec![e(drift)])
}

fn combo(alpha: f64, f: &str, beta: f64, g: &str) -> TestFunction<f64> {
    TestFunction::new("combo", Expr::lit(alpha) * e(f) + Expr::lit(beta) * e(g))
}

fn tf(src: &str) -> TestFunction<f64> {
    TestFunction::new(src, e(src))
}

/// `A(αf + βg)(x) = α Af(x) + β Ag(x)` to `1e-12`.
pub fn linearity(a: &Generator<f64>, f: &str, g: &str, alpha: f64, beta: f64, x: &StatePoint<f64>) -> Check {
    let lhs = apply_generator(a, &combo(alpha, f, beta, g), x).map_err(|e| e.to_string())?;
    let af = apply_generator(a, &tf(f), x).map_err(|e| e.to_string())?;
    let ag = apply_generator(a, &tf(g), x).map_err(|e| e.to_string())?;
    let rhs = alpha * af + beta * ag;
    if close(lhs, rhs, 1e-12) {
        Ok(())
    } else {
        Err(format!("A({alpha} {f} + {beta} {g})({x:?}) = {lhs}, expected {rhs}"))
    }
}

/// `A c = 0`: exactly for jump generators, to `1e-15` for flows.
pub fn conservation(a: &Generator<f64>, c: f64, x: &StatePoint<f64>) -> Check {
    let v = apply_generator(a, &TestFunction::new("c", Expr::lit(c)), x).map_err(|e| e.to_string())?;
    let tol = if matches!(a.kind, dualcheck::generator::GeneratorKind::Flow { .. }) { 1e-15 } else { 0.0 };
    if v.abs() <= tol {
        Ok(())
    } else {
        Err(format!("A({c})({x:?}) = {v}"))
    }
}

fn coords(x: &StatePoint<f64>) -> Vec<f64> {
    x.coords().to_vec()
}

/// `R = Φ₁ − Φ₂` off the atom constraints, to `1e-12`; `Ok` when the pair
/// lies on an atom.
pub fn error_term_consistency(
    a1: &Generator<f64>,
    a2: &Generator<f64>,
    psi: &str,
    x1: &StatePoint<f64>,
    x2: &StatePoint<f64>,
) -> Check {
    let eps = 1e-9;
    let psi = DualityFunction::new(e(psi), 1.0);
    let r = build_error_term(a1, a2, &psi).map_err(|e| e.to_string())?;
    let (c1, c2) = (coords(x1), coords(x2));
    let env = Env::pair(&c1, &c2);
    for atom in &r.atoms {
        if atom.constraint.eval(&env).map_err(|e| e.to_string())?.abs() <= eps {
            return Ok(());
        }
    }
    let lhs = r.eval_with(&env, eps).map_err(|e| e.to_string())?;
    let p1 = phi(a1, &psi, Slot::First, x1, x2).map_err(|e| e.to_string())?;
    let p2 = phi(a2, &psi, Slot::Second, x1, x2).map_err(|e| e.to_string())?;
    if close(lhs, p1 - p2, 1e-12) {
        Ok(())
    } else {
        Err(format!("R({c1:?}, {c2:?}) = {lhs}, phi1 - phi2 = {}", p1 - p2))
    }
}

/// The swapped pair's error term at `(x2, x1)` is `−R(x1, x2)`.
pub fn swap_symmetry(
    a1: &Generator<f64>,
    a2: &Generator<f64>,
    psi: &str,
    x1: &StatePoint<f64>,
    x2: &StatePoint<f64>,
) -> Check {
    let eps = 1e-9;
    let psi = DualityFunction::new(e(psi), 1.0);
    let r = build_error_term(a1, a2, &psi).map_err(|e| e.to_string())?;
    let rs = build_error_term(a2, a1, &psi.swapped()).map_err(|e| e.to_string())?;
    let (c1, c2) = (coords(x1), coords(x2));
    let v = r.eval_with(&Env::pair(&c1, &c2), eps).map_err(|e| e.to_string())?;
    let w = rs.eval_with(&Env::pair(&c2, &c1), eps).map_err(|e| e.to_string())?;
    if close(v, -w, 1e-12) {
        Ok(())
    } else {
        Err(format!("R = {v} but swapped R = {w} at ({c1:?}, {c2:?})"))
    }
}

/// `evolve(t + s) = evolve(s) ∘ evolve(t)` componentwise to `1e-10`.
pub fn semigroup_composition(q: &[Vec<f64>], p0: &[f64], t: f64, s: f64) -> Check {
    let law = ProcessLaw::new(
        Generator::rate_matrix(q.to_vec()),
        Initial::Distribution(p0.to_vec()),
        Solver::semigroup(),
    );
    let at_t = evolve_distribution(&law, t).map_err(|e| e.to_string())?;
    let direct = evolve_distribution(&law, t + s).map_err(|e| e.to_string())?;
    let composed = uniformize(q, &at_t.probs, s, 1e-13);
    for (a, b) in direct.probs.iter().zip(&composed) {
        if (a - b).abs() > 1e-10 {
            return Err(format!("evolve({}) = {:?} vs composed {:?}", t + s, direct.probs, composed));
        }
    }
    Ok(())
}

/// Halving the RK4 step on `b(x) = a x` over `[0, 2]` cuts the largest error
/// by at least 8.
pub fn rk4_order(a: f64, x0: f64, step: f64) -> Check {
    let drift = vec![Expr::lit(a) * Expr::x()];
    let space = StateSpace::positive_half_line();
    let max_err = |h: f64| -> Result<f64, String> {
        let mut worst = 0.0f64;
        for k in 1..=20 {
            let t = 0.1 * k as f64;
            let x = rk4_flow(&drift, &space, &[x0], t, h).map_err(|e| e.to_string())?[0];
            worst = worst.max((x - x0 * (a * t).exp()).abs());
        }
        Ok(worst)
    };
    let (coarse, fine) = (max_err(step)?, max_err(step / 2.0)?);
    if fine * 8.0 <= coarse {
        Ok(())
    } else {
        Err(format!("RK4 error {coarse:e} -> {fine:e}, ratio {}", coarse / fine))
    }
}

/// Jump times increase, consecutive states differ, `state_at` is
/// right-continuous, `left_limit` returns the pre-jump state and every state
/// lies in the space.
pub fn cadlag(law: &ProcessLaw<f64>, horizon: f64, stream: StreamId) -> Check {
    let path = sample_path(law, horizon, stream).map_err(|e| e.to_string())?;
    let space = &law.generator.space;
    if path.times.first() != Some(&0.0) || path.times.len() != path.states.len() {
        return Err("path must start at time 0 with one state per time".into());
    }
    for k in 0..path.states.len() {
        let x = &path.states[k];
        if !space.contains(x) {
            return Err(format!("state {x:?} outside the space"));
        }
        if path.state_at(path.times[k]) != x {
            return Err(format!("state_at is not right-continuous at {}", path.times[k]));
        }
        if k > 0 {
            let (s, t) = (path.times[k - 1], path.times[k]);
            if !(s < t && t <= horizon) {
                return Err(format!("jump times {s} then {t}"));
            }
            if path.states[k - 1] == *x {
                return Err(format!("empty jump at {t}"));
            }
            if path.left_limit(t) != &path.states[k - 1] {
                return Err(format!("left limit at {t} is not the pre-jump state"));
            }
            if path.state_at(0.5 * (s + t)) != &path.states[k - 1] {
                return Err(format!("path not constant on [{s}, {t})"));
            }
        }
    }
    Ok(())
}

/// The pair of counterexample generators.
pub fn masked_pair() -> (Generator<f64>, Generator<f64>) {
    counterexample_generators()
}
