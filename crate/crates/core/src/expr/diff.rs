use crate::error::{DualityError, Result};
use crate::scalar::Scalar;

use super::{Expr, Var};

pub(super) fn derivative<S: Scalar>(e: &Expr<S>, var: Var) -> Result<Expr<S>> {
    Ok(match e {
        Expr::Const(_) => Expr::zero(),
        Expr::Var(v) => {
            if *v == var {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Expr::Neg(a) => -derivative(a, var)?,
        Expr::Add(a, b) => derivative(a, var)? + derivative(b, var)?,
        Expr::Sub(a, b) => derivative(a, var)? - derivative(b, var)?,
        Expr::Mul(a, b) => {
            derivative(a, var)? * (**b).clone() + (**a).clone() * derivative(b, var)?
        }
        Expr::Div(a, b) => {
            let num = derivative(a, var)? * (**b).clone() - (**a).clone() * derivative(b, var)?;
            if num.is_zero() {
                Expr::zero()
            } else {
                num / (**b).clone().pow(Expr::lit(2.0))
            }
        }
        Expr::Pow(a, b) => {
            let da = derivative(a, var)?;
            if !b.mentions(var) {
                // d(a^c) = c a^(c-1) a'
                if da.is_zero() {
                    return Ok(Expr::zero());
                }
                let exponent = (**b).clone() - Expr::one();
                (**b).clone() * (**a).clone().pow(exponent) * da
            } else {
                // d(a^b) = a^b (b' ln a + b a' / a)
                let db = derivative(b, var)?;
                let log_term = db * (**a).clone().ln();
                let base_term = if da.is_zero() {
                    Expr::zero()
                } else {
                    (**b).clone() * da / (**a).clone()
                };
                e.clone() * (log_term + base_term)
            }
        }
        Expr::Exp(a) => {
            let da = derivative(a, var)?;
            if da.is_zero() {
                Expr::zero()
            } else {
                e.clone() * da
            }
        }
        Expr::Ln(a) => {
            let da = derivative(a, var)?;
            if da.is_zero() {
                Expr::zero()
            } else {
                da / (**a).clone()
            }
        }
        Expr::Ind(h) => {
            if h.mentions(var) {
                return Err(DualityError::Domain(format!(
                    "indicator {e} is not differentiable in {var}"
                )));
            }
            Expr::zero()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expr, Env};

    fn central_difference(e: &Expr<f64>, x: f64) -> f64 {
        let h = 1e-6;
        let f = |v: f64| e.eval(&Env::single(&[v]).with_r(Some(0.7))).unwrap();
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn symbolic_matches_finite_differences() {
        for src in [
            "exp(-r * x)",
            "x ^ 3 - 2 * x",
            "ln(x) / (1 + x ^ 2)",
            "x ^ x",
            "pow(2, x) * exp(x * x)",
            "-x * exp(-x) + 4",
        ] {
            let e: Expr<f64> = parse_expr(src).unwrap();
            let d = e.derivative(Var::X(0)).unwrap();
            for x in [0.3, 1.0, 1.7] {
                let exact = d.eval(&Env::single(&[x]).with_r(Some(0.7))).unwrap();
                let fd = central_difference(&e, x);
                assert!(
                    (exact - fd).abs() < 1e-6 * (1.0 + exact.abs()),
                    "{src} at {x}: {exact} vs {fd}"
                );
            }
        }
    }

    #[test]
    fn constants_differentiate_to_exact_zero() {
        let e: Expr<f64> = parse_expr("3.5 + r * 2").unwrap();
        assert!(e.derivative(Var::X(0)).unwrap().is_zero());
    }

    #[test]
    fn indicator_in_variable_is_rejected() {
        let e: Expr<f64> = parse_expr("ind(x - 1) * x").unwrap();
        assert!(matches!(
            e.derivative(Var::X(0)),
            Err(DualityError::Domain(_))
        ));
        let frozen: Expr<f64> = parse_expr("ind(x2 - 1) * x1").unwrap();
        assert!(frozen.derivative(Var::X1(0)).is_ok());
    }
}
