use crate::error::{DualityError, Result};
use crate::expr::{Env, Expr, Poly, Var};
use crate::generator::GeneratorKind;
use crate::scalar::Scalar;
use crate::space::{StatePoint, StateSpace};

use super::{FlowMethod, ProcessLaw, Solver, DEFAULT_RK4_STEP};

/// Catalog entry: coordinate drift `b(x) = a x + c` with constant `a`, `c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineFlow<S> {
    pub slope: S,
    pub offset: S,
}

impl<S: Scalar> AffineFlow<S> {
    pub fn value(&self, x0: S, t: S) -> S {
        if self.slope.is_zero() {
            x0 + self.offset * t
        } else {
            let growth = (self.slope * t).exp();
            if self.offset.is_zero() {
                x0 * growth
            } else {
                x0 * growth + self.offset / self.slope * (growth - S::one())
            }
        }
    }

    /// The solution as an expression of `time`.
    pub fn expr(&self, x0: S, time: Expr<S>) -> Expr<S> {
        if self.slope.is_zero() {
            return Expr::Const(x0) + Expr::Const(self.offset) * time;
        }
        let growth = (Expr::Const(self.slope) * time).exp();
        let base = Expr::Const(x0) * growth.clone();
        if self.offset.is_zero() {
            base
        } else {
            base + Expr::Const(self.offset / self.slope) * (growth - Expr::one())
        }
    }
}

/// Matches every drift component against the affine catalog (each component
/// may only depend on its own coordinate).
pub fn affine_catalog<S: Scalar>(drift: &[Expr<S>]) -> Option<Vec<AffineFlow<S>>> {
    drift
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let (slope, rest) = Poly::from_expr(b).linear_in(Var::X(i))?;
            Some(AffineFlow {
                slope: slope.as_constant()?,
                offset: rest.as_constant()?,
            })
        })
        .collect()
}

fn drift_of<S: Scalar>(p: &ProcessLaw<S>) -> Result<&[Expr<S>]> {
    match &p.generator.kind {
        GeneratorKind::Flow { drift, .. } => Ok(drift),
        _ => Err(DualityError::Unsupported(format!(
            "{} generator has no deterministic flow",
            p.generator.kind_name()
        ))),
    }
}

fn start<S: Scalar>(p: &ProcessLaw<S>) -> Result<Vec<S>> {
    match p.initial_point()? {
        StatePoint::Real(v) => Ok(v.clone()),
        StatePoint::Label(_) => Err(DualityError::Domain("flow started at a label".into())),
    }
}

/// State of a deterministic flow at time `t`.
pub fn flow_state<S: Scalar>(p: &ProcessLaw<S>, t: S) -> Result<StatePoint<S>> {
    let Solver::ExactFlow(method) = p.solver else {
        return Err(DualityError::Unsupported("flow_state needs an exact flow solver".into()));
    };
    if !(t >= S::zero()) {
        return Err(DualityError::Domain(format!("negative time {t}")));
    }
    let drift = drift_of(p)?;
    let x0 = start(p)?;
    if t.is_zero() {
        return Ok(StatePoint::Real(x0));
    }
    let out = match (method, affine_catalog(drift)) {
        (FlowMethod::ClosedForm, Some(catalog)) => {
            let x: Vec<S> = catalog
                .iter()
                .zip(&x0)
                .map(|(f, &x)| f.value(x, t))
                .collect();
            let point = StatePoint::Real(x);
            if !p.generator.space.contains(&point) {
                return Err(DualityError::Blowup {
                    time: t.to_f64_lossy(),
                    detail: format!("closed-form flow reached {point:?}"),
                });
            }
            point
        }
        (FlowMethod::ClosedForm, None) => StatePoint::Real(rk4_flow(
            drift,
            &p.generator.space,
            &x0,
            t,
            S::lit(DEFAULT_RK4_STEP),
        )?),
        (FlowMethod::Rk4 { step }, _) => {
            StatePoint::Real(rk4_flow(drift, &p.generator.space, &x0, t, step)?)
        }
    };
    Ok(out)
}

/// Symbolic path `x(time)` for catalog flows started at a point.
pub fn flow_path_exprs<S: Scalar>(p: &ProcessLaw<S>, time: &Expr<S>) -> Option<Vec<Expr<S>>> {
    if !matches!(p.solver, Solver::ExactFlow(FlowMethod::ClosedForm)) {
        return None;
    }
    let catalog = affine_catalog(drift_of(p).ok()?)?;
    let x0 = start(p).ok()?;
    Some(
        catalog
            .iter()
            .zip(&x0)
            .map(|(f, &x)| f.expr(x, time.clone()))
            .collect(),
    )
}

/// Classical fourth-order Runge–Kutta with `ceil(t / step)` equal steps.
pub fn rk4_flow<S: Scalar>(
    drift: &[Expr<S>],
    space: &StateSpace<S>,
    x0: &[S],
    t: S,
    step: S,
) -> Result<Vec<S>> {
    if !(step > S::zero()) {
        return Err(DualityError::Domain("RK4 step must be positive".into()));
    }
    let n = (t / step).ceil().to_usize().unwrap_or(1).max(1);
    let h = t / S::from_usize_lossy(n);
    let half = h / S::lit(2.0);
    let sixth = h / S::lit(6.0);
    let two = S::lit(2.0);
    let eval = |x: &[S]| -> Result<Vec<S>> {
        drift.iter().map(|b| b.eval(&Env::single(x))).collect()
    };
    let axpy = |x: &[S], k: &[S], a: S| -> Vec<S> { x.iter().zip(k).map(|(&x, &k)| x + a * k).collect() };
    let mut x = x0.to_vec();
    for i in 0..n {
        let blowup = |e: DualityError| DualityError::Blowup {
            time: (S::from_usize_lossy(i) * h).to_f64_lossy(),
            detail: e.to_string(),
        };
        let k1 = eval(&x).map_err(blowup)?;
        let k2 = eval(&axpy(&x, &k1, half)).map_err(blowup)?;
        let k3 = eval(&axpy(&x, &k2, half)).map_err(blowup)?;
        let k4 = eval(&axpy(&x, &k3, h)).map_err(blowup)?;
        for d in 0..x.len() {
            x[d] = x[d] + sixth * (k1[d] + two * k2[d] + two * k3[d] + k4[d]);
        }
        let point = StatePoint::Real(x.clone());
        if !space.contains(&point) {
            return Err(DualityError::Blowup {
                time: (S::from_usize_lossy(i + 1) * h).to_f64_lossy(),
                detail: format!("RK4 reached {x:?}"),
            });
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;
    use crate::generator::Generator;
    use crate::trajectory::Initial;

    fn law(drift: &str, x0: f64, method: FlowMethod<f64>) -> ProcessLaw<f64> {
        ProcessLaw::new(
            Generator::flow(StateSpace::positive_half_line(), vec![parse_expr(drift).unwrap()]),
            Initial::Point(StatePoint::real1(x0)),
            Solver::ExactFlow(method),
        )
    }

    fn x(p: &StatePoint<f64>) -> f64 {
        p.coords()[0]
    }

    #[test]
    fn exponential_growth_closed_form() {
        let p = law("x", 1.0, FlowMethod::ClosedForm);
        assert_eq!(x(&flow_state(&p, 1.0).unwrap()), std::f64::consts::E);
        assert!((x(&flow_state(&p, 2f64.ln()).unwrap()) - 2.0).abs() < 1e-15);
        assert_eq!(x(&flow_state(&p, 0.0).unwrap()), 1.0);
    }

    #[test]
    fn non_catalog_drift_falls_back_to_rk4() {
        // b(x) = x^2 from 0.5: x(t) = 0.5 / (1 - 0.5 t).
        let p = law("x^2", 0.5, FlowMethod::ClosedForm);
        assert!(affine_catalog(match &p.generator.kind {
            GeneratorKind::Flow { drift, .. } => drift,
            _ => unreachable!(),
        })
        .is_none());
        let v = x(&flow_state(&p, 1.0).unwrap());
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn leaving_the_box_is_a_blowup() {
        let p = law("-1", 1.0, FlowMethod::ClosedForm);
        assert!(matches!(flow_state(&p, 2.0), Err(DualityError::Blowup { .. })));
        let q = law("-1", 1.0, FlowMethod::Rk4 { step: 0.01 });
        assert!(matches!(flow_state(&q, 2.0), Err(DualityError::Blowup { .. })));
        let r = law("x^2", 1.0, FlowMethod::Rk4 { step: 0.001 });
        assert!(flow_state(&r, 2.0).is_err());
    }

    #[test]
    fn affine_with_offset() {
        // b(x) = 2 - x, x0 = 1: x(t) = 2 - e^{-t}.
        let p = law("2 - x", 1.0, FlowMethod::ClosedForm);
        let v = x(&flow_state(&p, 0.7).unwrap());
        assert!((v - (2.0 - (-0.7f64).exp())).abs() < 1e-15);
        let path = flow_path_exprs(&p, &Expr::Var(Var::T)).unwrap();
        let at = path[0].eval(&Env::default().with_t(0.7)).unwrap();
        assert!((at - v).abs() < 1e-15);
    }
}
