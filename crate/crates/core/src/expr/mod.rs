//! Closed expression trees over state coordinates.
//!
//! Duality functions, test functions, drifts, jump rates and singular masks
//! are all expressions, so generators can be applied symbolically and the
//! indicator-carrying parts of an error term stay visible.

mod canon;
mod diff;
mod parse;
mod sign;

use std::fmt;
use std::ops;

use crate::error::{DualityError, Result};
use crate::scalar::Scalar;

pub(crate) use canon::Poly;
pub use parse::parse_expr;
pub use sign::{sign_of, Sign, SignContext};

/// A variable an expression may reference.
///
/// `X` is the coordinate of a single-argument function (test functions,
/// drifts, rates), `X1`/`X2` the coordinates of the two arguments of a
/// duality function, `R` the parameter of an exponential test-function family
/// and `T` an internal time variable used when tracing expressions along flows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    X(usize),
    X1(usize),
    X2(usize),
    R,
    T,
}

impl Var {
    /// Rebinds a coordinate variable to another coordinate family, keeping the index.
    pub fn with_family(self, family: Family) -> Var {
        match self {
            Var::X(i) | Var::X1(i) | Var::X2(i) => family.var(i),
            other => other,
        }
    }

    pub fn family(self) -> Option<Family> {
        match self {
            Var::X(_) => Some(Family::X),
            Var::X1(_) => Some(Family::X1),
            Var::X2(_) => Some(Family::X2),
            _ => None,
        }
    }
}

/// Coordinate family selector: which argument a generator acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    X,
    X1,
    X2,
}

impl Family {
    pub fn var(self, index: usize) -> Var {
        match self {
            Family::X => Var::X(index),
            Family::X1 => Var::X1(index),
            Family::X2 => Var::X2(index),
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (name, index) = match self {
            Var::X(i) => ("x", *i),
            Var::X1(i) => ("x1", *i),
            Var::X2(i) => ("x2", *i),
            Var::R => return f.write_str("r"),
            Var::T => return f.write_str("t"),
        };
        if index == 0 {
            f.write_str(name)
        } else {
            write!(f, "{name}[{index}]")
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr<S> {
    Const(S),
    Var(Var),
    Neg(Box<Expr<S>>),
    Add(Box<Expr<S>>, Box<Expr<S>>),
    Sub(Box<Expr<S>>, Box<Expr<S>>),
    Mul(Box<Expr<S>>, Box<Expr<S>>),
    Div(Box<Expr<S>>, Box<Expr<S>>),
    Pow(Box<Expr<S>>, Box<Expr<S>>),
    Exp(Box<Expr<S>>),
    Ln(Box<Expr<S>>),
    /// `ind(h)`: one where `h = 0` exactly, zero elsewhere.
    Ind(Box<Expr<S>>),
}

/// Variable bindings for evaluation.
#[derive(Clone, Copy, Debug)]
pub struct Env<'a, S> {
    pub x: &'a [S],
    pub x1: &'a [S],
    pub x2: &'a [S],
    pub r: Option<S>,
    pub t: Option<S>,
}

impl<S> Default for Env<'_, S> {
    fn default() -> Self {
        Env {
            x: &[],
            x1: &[],
            x2: &[],
            r: None,
            t: None,
        }
    }
}

impl<'a, S: Scalar> Env<'a, S> {
    pub fn single(x: &'a [S]) -> Self {
        Env {
            x,
            ..Env::default()
        }
    }

    pub fn pair(x1: &'a [S], x2: &'a [S]) -> Self {
        Env {
            x1,
            x2,
            ..Env::default()
        }
    }

    pub fn with_r(mut self, r: Option<S>) -> Self {
        self.r = r;
        self
    }

    pub fn with_t(mut self, t: S) -> Self {
        self.t = Some(t);
        self
    }

    fn lookup(&self, var: Var) -> Result<S> {
        let coord = |values: &[S], i: usize| {
            values
                .get(i)
                .copied()
                .ok_or_else(|| DualityError::Eval(format!("variable {var} is unbound")))
        };
        match var {
            Var::X(i) => coord(self.x, i),
            Var::X1(i) => coord(self.x1, i),
            Var::X2(i) => coord(self.x2, i),
            Var::R => self
                .r
                .ok_or_else(|| DualityError::Eval("parameter r is unbound".into())),
            Var::T => self
                .t
                .ok_or_else(|| DualityError::Eval("time t is unbound".into())),
        }
    }
}

impl<S: Scalar> Expr<S> {
    pub fn constant(value: S) -> Self {
        Expr::Const(value)
    }

    pub fn lit(value: f64) -> Self {
        Expr::Const(S::lit(value))
    }

    pub fn var(var: Var) -> Self {
        Expr::Var(var)
    }

    pub fn x() -> Self {
        Expr::Var(Var::X(0))
    }

    pub fn x1() -> Self {
        Expr::Var(Var::X1(0))
    }

    pub fn x2() -> Self {
        Expr::Var(Var::X2(0))
    }

    pub fn r() -> Self {
        Expr::Var(Var::R)
    }

    pub fn zero() -> Self {
        Expr::Const(S::zero())
    }

    pub fn one() -> Self {
        Expr::Const(S::one())
    }

    pub fn as_const(&self) -> Option<S> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if c.is_zero())
    }

    fn is_one(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == S::one())
    }

    pub fn exp(self) -> Self {
        match self {
            Expr::Const(c) => Expr::Const(c.exp()),
            e => Expr::Exp(Box::new(e)),
        }
    }

    pub fn ln(self) -> Self {
        Expr::Ln(Box::new(self))
    }

    pub fn pow(self, exponent: Expr<S>) -> Self {
        if exponent.is_one() {
            return self;
        }
        if exponent.is_zero() {
            return Expr::one();
        }
        Expr::Pow(Box::new(self), Box::new(exponent))
    }

    /// Indicator of the zero set of `self`.
    pub fn indicator(self) -> Self {
        match self {
            Expr::Const(c) => Expr::Const(if c.is_zero() { S::one() } else { S::zero() }),
            e => Expr::Ind(Box::new(e)),
        }
    }

    pub fn eval(&self, env: &Env<'_, S>) -> Result<S> {
        let value = match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => env.lookup(*v)?,
            Expr::Neg(a) => -a.eval(env)?,
            Expr::Add(a, b) => a.eval(env)? + b.eval(env)?,
            Expr::Sub(a, b) => a.eval(env)? - b.eval(env)?,
            Expr::Mul(a, b) => a.eval(env)? * b.eval(env)?,
            Expr::Div(a, b) => {
                let den = b.eval(env)?;
                if den.is_zero() {
                    return Err(DualityError::Eval(format!("division by zero in {self}")));
                }
                a.eval(env)? / den
            }
            Expr::Pow(a, b) => a.eval(env)?.powf(b.eval(env)?),
            Expr::Exp(a) => a.eval(env)?.exp(),
            Expr::Ln(a) => {
                let arg = a.eval(env)?;
                if arg <= S::zero() {
                    return Err(DualityError::Eval(format!(
                        "logarithm of non-positive value {arg} in {self}"
                    )));
                }
                arg.ln()
            }
            Expr::Ind(h) => {
                if h.eval(env)?.is_zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(DualityError::Eval(format!("{self} is not finite here")))
        }
    }

    /// Replaces variables for which `map` returns a replacement.
    pub fn substitute(&self, map: &dyn Fn(Var) -> Option<Expr<S>>) -> Expr<S> {
        let go = |e: &Expr<S>| Box::new(e.substitute(map));
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(v) => map(*v).unwrap_or(Expr::Var(*v)),
            Expr::Neg(a) => Expr::Neg(go(a)),
            Expr::Add(a, b) => Expr::Add(go(a), go(b)),
            Expr::Sub(a, b) => Expr::Sub(go(a), go(b)),
            Expr::Mul(a, b) => Expr::Mul(go(a), go(b)),
            Expr::Div(a, b) => Expr::Div(go(a), go(b)),
            Expr::Pow(a, b) => Expr::Pow(go(a), go(b)),
            Expr::Exp(a) => Expr::Exp(go(a)),
            Expr::Ln(a) => Expr::Ln(go(a)),
            Expr::Ind(a) => Expr::Ind(go(a)),
        }
    }

    /// Renames every coordinate variable of family `from` to family `to`.
    pub fn rename_family(&self, from: Family, to: Family) -> Expr<S> {
        self.substitute(&|v| match v.family() {
            Some(f) if f == from => Some(Expr::Var(v.with_family(to))),
            _ => None,
        })
    }

    /// Exchanges the roles of `x1` and `x2`.
    pub fn swap_pair(&self) -> Expr<S> {
        self.substitute(&|v| match v {
            Var::X1(i) => Some(Expr::Var(Var::X2(i))),
            Var::X2(i) => Some(Expr::Var(Var::X1(i))),
            _ => None,
        })
    }

    pub fn any_node(&self, pred: &dyn Fn(&Expr<S>) -> bool) -> bool {
        if pred(self) {
            return true;
        }
        match self {
            Expr::Const(_) | Expr::Var(_) => false,
            Expr::Neg(a) | Expr::Exp(a) | Expr::Ln(a) | Expr::Ind(a) => a.any_node(pred),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.any_node(pred) || b.any_node(pred),
        }
    }

    pub fn mentions(&self, var: Var) -> bool {
        self.any_node(&|e| matches!(e, Expr::Var(v) if *v == var))
    }

    pub fn mentions_family(&self, family: Family) -> bool {
        self.any_node(&|e| matches!(e, Expr::Var(v) if v.family() == Some(family)))
    }

    pub fn has_indicator(&self) -> bool {
        self.any_node(&|e| matches!(e, Expr::Ind(_)))
    }

    /// Largest coordinate index referenced for `family`, if any.
    pub fn max_index(&self, family: Family) -> Option<usize> {
        let mut out = None;
        self.visit_vars(&mut |v| {
            if v.family() == Some(family) {
                let i = match v {
                    Var::X(i) | Var::X1(i) | Var::X2(i) => i,
                    _ => unreachable!(),
                };
                out = Some(out.map_or(i, |m: usize| m.max(i)));
            }
        });
        out
    }

    fn visit_vars(&self, f: &mut dyn FnMut(Var)) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => f(*v),
            Expr::Neg(a) | Expr::Exp(a) | Expr::Ln(a) | Expr::Ind(a) => a.visit_vars(f),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
        }
    }

    /// Symbolic partial derivative with respect to `var`.
    pub fn derivative(&self, var: Var) -> Result<Expr<S>> {
        diff::derivative(self, var)
    }

    /// Canonical simplification: expands products, merges exponentials and
    /// combines like terms. Two expressions that are equal as rational
    /// functions of exponentials reduce to the same tree.
    pub fn simplify(&self) -> Expr<S> {
        Poly::from_expr(self).to_expr()
    }

    /// True when the expression reduces to zero identically.
    pub fn is_identically_zero(&self) -> bool {
        Poly::from_expr(self).is_zero()
    }

    /// Convenience for `ind(a - b)`.
    pub fn eq_indicator(a: Expr<S>, b: Expr<S>) -> Self {
        (a - b).indicator()
    }

    /// Number of nodes; used to keep generated tables small.
    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Neg(a) | Expr::Exp(a) | Expr::Ln(a) | Expr::Ind(a) => 1 + a.size(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => 1 + a.size() + b.size(),
        }
    }
}

impl<S: Scalar> ops::Add for Expr<S> {
    type Output = Expr<S>;
    fn add(self, rhs: Expr<S>) -> Expr<S> {
        match (self, rhs) {
            (Expr::Const(a), Expr::Const(b)) => Expr::Const(a + b),
            (a, b) if a.is_zero() => b,
            (a, b) if b.is_zero() => a,
            (a, b) => Expr::Add(Box::new(a), Box::new(b)),
        }
    }
}

impl<S: Scalar> ops::Sub for Expr<S> {
    type Output = Expr<S>;
    fn sub(self, rhs: Expr<S>) -> Expr<S> {
        match (self, rhs) {
            (Expr::Const(a), Expr::Const(b)) => Expr::Const(a - b),
            (a, b) if b.is_zero() => a,
            (a, b) if a.is_zero() => -b,
            (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }
}

impl<S: Scalar> ops::Mul for Expr<S> {
    type Output = Expr<S>;
    fn mul(self, rhs: Expr<S>) -> Expr<S> {
        match (self, rhs) {
            (Expr::Const(a), Expr::Const(b)) => Expr::Const(a * b),
            (a, _) if a.is_zero() => Expr::zero(),
            (_, b) if b.is_zero() => Expr::zero(),
            (a, b) if a.is_one() => b,
            (a, b) if b.is_one() => a,
            (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }
}

impl<S: Scalar> ops::Div for Expr<S> {
    type Output = Expr<S>;
    fn div(self, rhs: Expr<S>) -> Expr<S> {
        match (self, rhs) {
            (Expr::Const(a), Expr::Const(b)) if !b.is_zero() => Expr::Const(a / b),
            (a, b) if b.is_one() => a,
            (a, b) => Expr::Div(Box::new(a), Box::new(b)),
        }
    }
}

impl<S: Scalar> ops::Neg for Expr<S> {
    type Output = Expr<S>;
    fn neg(self) -> Expr<S> {
        match self {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Neg(a) => *a,
            e => Expr::Neg(Box::new(e)),
        }
    }
}

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

impl<S: Scalar> Expr<S> {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Const(c) if *c < S::zero() || (c.is_zero() && c.is_sign_negative()) => PREC_NEG,
            Expr::Const(_) | Expr::Var(_) | Expr::Exp(_) | Expr::Ln(_) | Expr::Ind(_) => PREC_ATOM,
            Expr::Neg(_) => PREC_NEG,
            Expr::Add(..) | Expr::Sub(..) => PREC_ADD,
            Expr::Mul(..) | Expr::Div(..) => PREC_MUL,
            Expr::Pow(..) => PREC_POW,
        }
    }

    fn fmt_at(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        let paren = self.precedence() < min_prec;
        if paren {
            f.write_str("(")?;
        }
        match self {
            Expr::Const(c) => write!(f, "{c}")?,
            Expr::Var(v) => write!(f, "{v}")?,
            Expr::Neg(a) => {
                f.write_str("-")?;
                a.fmt_at(f, PREC_NEG)?;
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                a.fmt_at(f, PREC_ADD)?;
                f.write_str(if matches!(self, Expr::Add(..)) { " + " } else { " - " })?;
                b.fmt_at(f, PREC_ADD + 1)?;
            }
            Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.fmt_at(f, PREC_MUL)?;
                f.write_str(if matches!(self, Expr::Mul(..)) { " * " } else { " / " })?;
                b.fmt_at(f, PREC_MUL + 1)?;
            }
            Expr::Pow(a, b) => {
                a.fmt_at(f, PREC_ATOM)?;
                f.write_str("^")?;
                b.fmt_at(f, PREC_NEG)?;
            }
            Expr::Exp(a) => write!(f, "exp({a})")?,
            Expr::Ln(a) => write!(f, "ln({a})")?,
            Expr::Ind(a) => write!(f, "ind({a})")?,
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// Infix rendering accepted back by [`parse_expr`].
impl<S: Scalar> fmt::Display for Expr<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_at(f, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_counterexample_psi() {
        let psi: Expr<f64> = (-(Expr::x1() * Expr::x2())).exp();
        let v = psi.eval(&Env::pair(&[1.0], &[1.0])).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn ln_of_negative_is_eval_error() {
        let e: Expr<f64> = Expr::x().ln();
        assert!(matches!(
            e.eval(&Env::single(&[-1.0])),
            Err(DualityError::Eval(_))
        ));
    }

    #[test]
    fn unbound_variable_is_eval_error() {
        let e: Expr<f64> = Expr::x2();
        assert!(e.eval(&Env::single(&[1.0])).is_err());
    }

    #[test]
    fn indicator_is_exact() {
        let e: Expr<f64> = Expr::eq_indicator(Expr::x1(), Expr::x2());
        assert_eq!(e.eval(&Env::pair(&[1.0], &[1.0])).unwrap(), 1.0);
        assert_eq!(e.eval(&Env::pair(&[1.0], &[1.0 + 1e-15])).unwrap(), 0.0);
    }

    #[test]
    fn display_round_trips_through_parser() {
        let src = "-x1 * x2 + exp(-(x1 - 2.5) / x2) ^ -2 - ind(x1 - x2) * ln(x[1])";
        let e: Expr<f64> = parse_expr(src).unwrap();
        let back: Expr<f64> = parse_expr(&e.to_string()).unwrap();
        assert_eq!(e, back);
    }

    #[test]
    fn works_in_single_precision() {
        let e: Expr<f32> = parse_expr("exp(-r * x)").unwrap();
        let v = e.eval(&Env::single(&[2.0f32]).with_r(Some(0.5))).unwrap();
        assert!((v - (-1.0f32).exp()).abs() < 1e-6);
    }
}
