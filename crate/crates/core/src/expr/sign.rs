//! Structural sign analysis on the canonical form.

use crate::scalar::Scalar;

use super::canon::{Factor, Poly};
use super::{Expr, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Zero,
    Positive,
    NonNegative,
    Negative,
    NonPositive,
    Unknown,
}

impl Sign {
    pub fn is_nonnegative(self) -> bool {
        matches!(self, Sign::Zero | Sign::Positive | Sign::NonNegative)
    }

    pub fn is_nonpositive(self) -> bool {
        matches!(self, Sign::Zero | Sign::Negative | Sign::NonPositive)
    }

    fn times(self, other: Sign) -> Sign {
        use Sign::*;
        match (self, other) {
            (Zero, _) | (_, Zero) => Zero,
            (Unknown, _) | (_, Unknown) => Unknown,
            (a, b) => {
                let negative = a.is_nonpositive() != b.is_nonpositive();
                let strict = matches!(a, Positive | Negative) && matches!(b, Positive | Negative);
                match (negative, strict) {
                    (false, true) => Positive,
                    (false, false) => NonNegative,
                    (true, true) => Negative,
                    (true, false) => NonPositive,
                }
            }
        }
    }

    fn plus(self, other: Sign) -> Sign {
        use Sign::*;
        match (self, other) {
            (Zero, s) | (s, Zero) => s,
            (Positive, s) | (s, Positive) if s.is_nonnegative() => Positive,
            (Negative, s) | (s, Negative) if s.is_nonpositive() => Negative,
            (a, b) if a.is_nonnegative() && b.is_nonnegative() => NonNegative,
            (a, b) if a.is_nonpositive() && b.is_nonpositive() => NonPositive,
            _ => Unknown,
        }
    }
}

/// Facts about variables available to the analyzer.
#[derive(Clone, Debug, Default)]
pub struct SignContext {
    nonnegative: Vec<Var>,
}

impl SignContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_nonnegative(mut self, var: Var) -> Self {
        self.nonnegative.push(var);
        self
    }

    fn knows_nonnegative(&self, var: Var) -> bool {
        self.nonnegative.contains(&var)
    }
}

/// Sign of `e` everywhere on the domain described by `ctx`, as far as it can
/// be read off the structure. `Unknown` means "not provable", not "mixed".
pub fn sign_of<S: Scalar>(e: &Expr<S>, ctx: &SignContext) -> Sign {
    poly_sign(&Poly::from_expr(e), ctx)
}

fn poly_sign<S: Scalar>(p: &Poly<S>, ctx: &SignContext) -> Sign {
    let mut total = Sign::Zero;
    for (m, c) in p.terms() {
        let mut term = if c > S::zero() {
            Sign::Positive
        } else {
            Sign::Negative
        };
        for (f, power) in m.factors() {
            let base = factor_sign(f, ctx);
            let s = if power % 2 == 0 {
                match base {
                    Sign::Zero => Sign::Zero,
                    Sign::Positive | Sign::Negative => Sign::Positive,
                    _ => Sign::NonNegative,
                }
            } else {
                base
            };
            term = term.times(s);
        }
        total = total.plus(term);
        if total == Sign::Unknown {
            return total;
        }
    }
    total
}

fn factor_sign<S: Scalar>(f: &Factor<S>, ctx: &SignContext) -> Sign {
    match f {
        Factor::Var(v) if ctx.knows_nonnegative(*v) => Sign::NonNegative,
        Factor::Var(_) => Sign::Unknown,
        Factor::Exp(_) => Sign::Positive,
        Factor::Ind(_) => Sign::NonNegative,
        Factor::Ln(_) => Sign::Unknown,
        Factor::Pow(base, _) => {
            if poly_sign(base, ctx).is_nonnegative() {
                Sign::NonNegative
            } else {
                Sign::Unknown
            }
        }
        Factor::Group(inner) => match poly_sign(inner, ctx) {
            Sign::Positive => Sign::Positive,
            Sign::Negative => Sign::Negative,
            s => s,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn sign(src: &str) -> Sign {
        let ctx = SignContext::new()
            .with_nonnegative(Var::X1(0))
            .with_nonnegative(Var::X2(0));
        sign_of(&parse_expr::<f64>(src).unwrap(), &ctx)
    }

    #[test]
    fn reads_signs_off_structure() {
        assert_eq!(sign("0.5 * x1 * x2 * exp(-x1 * x2)"), Sign::NonNegative);
        assert_eq!(sign("-(x1 * x2) * exp(-x1 * x2)"), Sign::NonPositive);
        assert_eq!(sign("exp(x1) + 2"), Sign::Positive);
        // Expanded squares lose their sign; only unexpanded structure is read.
        assert_eq!(sign("(x1 - x2)^2"), Sign::Unknown);
        assert_eq!(sign("x1 - x2"), Sign::Unknown);
        assert_eq!(sign("x1 * x2 - x2 * x1"), Sign::Zero);
        assert_eq!(sign("ind(x1 - 1) * 3"), Sign::NonNegative);
    }
}
