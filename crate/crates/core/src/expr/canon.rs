//! Canonical polynomial-in-exponentials normal form.
//!
//! An expression is brought to a sorted sum of terms `c * Π fᵢ^kᵢ`, where the
//! factors are variables, a single merged exponential, logarithms, general
//! powers, indicators, or irreducible sums raised to integer powers. Products
//! are distributed and like terms combined, which makes structural identity
//! checks (is `Φ₁ − Φ₂` identically zero? is a constraint constant along a
//! flow?) decidable for the expression class the engine works with.

use std::cmp::Ordering;

use crate::scalar::Scalar;

use super::{Expr, Var};

const MAX_EXPANDED_POWER: i64 = 8;
const MAX_INTEGER_POWER: f64 = 64.0;

#[derive(Clone, Debug)]
pub(crate) enum Factor<S> {
    Var(Var),
    Exp(Poly<S>),
    Ln(Poly<S>),
    Pow(Poly<S>, Poly<S>),
    Ind(Poly<S>),
    Group(Poly<S>),
}

#[derive(Clone, Debug)]
pub(crate) struct Monomial<S> {
    factors: Vec<(Factor<S>, i64)>,
}

#[derive(Clone, Debug)]
pub(crate) struct Poly<S> {
    terms: Vec<(Monomial<S>, S)>,
}

impl<S: Scalar> Factor<S> {
    fn rank(&self) -> u8 {
        match self {
            Factor::Var(_) => 0,
            Factor::Exp(_) => 1,
            Factor::Ln(_) => 2,
            Factor::Pow(..) => 3,
            Factor::Ind(_) => 4,
            Factor::Group(_) => 5,
        }
    }

    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Factor::Var(a), Factor::Var(b)) => a.cmp(b),
            (Factor::Exp(a), Factor::Exp(b))
            | (Factor::Ln(a), Factor::Ln(b))
            | (Factor::Ind(a), Factor::Ind(b))
            | (Factor::Group(a), Factor::Group(b)) => a.cmp(b),
            (Factor::Pow(a, x), Factor::Pow(b, y)) => a.cmp(b).then_with(|| x.cmp(y)),
            _ => self.rank().cmp(&other.rank()),
        }
    }

    fn mentions(&self, var: Var) -> bool {
        match self {
            Factor::Var(v) => *v == var,
            Factor::Exp(p) | Factor::Ln(p) | Factor::Ind(p) | Factor::Group(p) => p.mentions(var),
            Factor::Pow(a, b) => a.mentions(var) || b.mentions(var),
        }
    }

    fn to_expr(&self) -> Expr<S> {
        match self {
            Factor::Var(v) => Expr::Var(*v),
            Factor::Exp(p) => Expr::Exp(Box::new(p.to_expr())),
            Factor::Ln(p) => Expr::Ln(Box::new(p.to_expr())),
            Factor::Pow(a, b) => Expr::Pow(Box::new(a.to_expr()), Box::new(b.to_expr())),
            Factor::Ind(p) => Expr::Ind(Box::new(p.to_expr())),
            Factor::Group(p) => p.to_expr(),
        }
    }
}

impl<S: Scalar> Monomial<S> {
    fn one() -> Self {
        Monomial {
            factors: Vec::new(),
        }
    }

    fn single(factor: Factor<S>, power: i64) -> Self {
        Monomial {
            factors: vec![(factor, power)],
        }
    }

    fn cmp(&self, other: &Self) -> Ordering {
        for ((fa, pa), (fb, pb)) in self.factors.iter().zip(&other.factors) {
            let o = fa.cmp(fb).then(pa.cmp(pb));
            if o != Ordering::Equal {
                return o;
            }
        }
        self.factors.len().cmp(&other.factors.len())
    }

    fn mentions(&self, var: Var) -> bool {
        self.factors.iter().any(|(f, _)| f.mentions(var))
    }

    pub(crate) fn factors(&self) -> impl Iterator<Item = (&Factor<S>, i64)> {
        self.factors.iter().map(|(f, p)| (f, *p))
    }

    /// Product of two monomials; the coefficient absorbs exponentials that
    /// collapse to constants.
    fn mul(&self, other: &Self) -> (Monomial<S>, S) {
        let mut merged: Vec<(Factor<S>, i64)> = Vec::new();
        let mut exp_arg: Option<Poly<S>> = None;
        let mut push = |f: &Factor<S>, p: i64, merged: &mut Vec<(Factor<S>, i64)>| {
            if let Factor::Exp(arg) = f {
                let scaled = arg.scale(S::from_i64(p).unwrap());
                exp_arg = Some(match exp_arg.take() {
                    Some(a) => a.add(&scaled),
                    None => scaled,
                });
            } else {
                merged.push((f.clone(), p));
            }
        };
        for (f, p) in self.factors.iter().chain(&other.factors) {
            push(f, *p, &mut merged);
        }
        merged.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out: Vec<(Factor<S>, i64)> = Vec::with_capacity(merged.len() + 1);
        for (f, p) in merged {
            match out.last_mut() {
                Some((g, q)) if g.cmp(&f) == Ordering::Equal => {
                    *q = if matches!(f, Factor::Ind(_)) && *q > 0 && p > 0 {
                        1
                    } else {
                        *q + p
                    };
                }
                _ => out.push((f, p)),
            }
        }
        out.retain(|(_, p)| *p != 0);
        for (f, p) in out.iter_mut() {
            if matches!(f, Factor::Ind(_)) && *p > 0 {
                *p = 1;
            }
        }
        let mut coeff = S::one();
        if let Some(arg) = exp_arg {
            let (constant, rest) = arg.split_constant();
            coeff = constant.exp();
            if !rest.is_zero() {
                out.push((Factor::Exp(rest), 1));
                out.sort_by(|a, b| a.0.cmp(&b.0));
            }
        }
        (Monomial { factors: out }, coeff)
    }

    fn pow(&self, n: i64) -> (Monomial<S>, S) {
        let scaled = Monomial {
            factors: self.factors.iter().map(|(f, p)| (f.clone(), p * n)).collect(),
        };
        Monomial::one().mul(&scaled)
    }

    fn to_expr(&self) -> Expr<S> {
        let mut acc: Option<Expr<S>> = None;
        for (f, p) in &self.factors {
            let base = f.to_expr();
            let term = if *p == 1 {
                base
            } else {
                Expr::Pow(Box::new(base), Box::new(Expr::Const(S::from_i64(*p).unwrap())))
            };
            acc = Some(match acc {
                Some(a) => Expr::Mul(Box::new(a), Box::new(term)),
                None => term,
            });
        }
        acc.unwrap_or_else(Expr::one)
    }

    fn without(&self, var: Var) -> Monomial<S> {
        Monomial {
            factors: self
                .factors
                .iter()
                .filter(|(f, _)| !matches!(f, Factor::Var(v) if *v == var))
                .cloned()
                .collect(),
        }
    }

    fn power_of(&self, var: Var) -> i64 {
        self.factors
            .iter()
            .find_map(|(f, p)| matches!(f, Factor::Var(v) if *v == var).then_some(*p))
            .unwrap_or(0)
    }
}

impl<S: Scalar> Poly<S> {
    pub(crate) fn zero() -> Self {
        Poly { terms: Vec::new() }
    }

    pub(crate) fn constant(c: S) -> Self {
        if c.is_zero() {
            Poly::zero()
        } else {
            Poly {
                terms: vec![(Monomial::one(), c)],
            }
        }
    }

    fn from_monomial(m: Monomial<S>, c: S) -> Self {
        Poly::from_terms(vec![(m, c)])
    }

    fn from_terms(mut terms: Vec<(Monomial<S>, S)>) -> Self {
        terms.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out: Vec<(Monomial<S>, S)> = Vec::with_capacity(terms.len());
        for (m, c) in terms {
            match out.last_mut() {
                Some((n, d)) if n.cmp(&m) == Ordering::Equal => *d = *d + c,
                _ => out.push((m, c)),
            }
        }
        out.retain(|(_, c)| !c.is_zero());
        Poly { terms: out }
    }

    pub(crate) fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub(crate) fn as_constant(&self) -> Option<S> {
        match self.terms.as_slice() {
            [] => Some(S::zero()),
            [(m, c)] if m.factors.is_empty() => Some(*c),
            _ => None,
        }
    }

    pub(crate) fn terms(&self) -> impl Iterator<Item = (&Monomial<S>, S)> {
        self.terms.iter().map(|(m, c)| (m, *c))
    }

    fn cmp(&self, other: &Self) -> Ordering {
        for ((ma, ca), (mb, cb)) in self.terms.iter().zip(&other.terms) {
            let o = ma.cmp(mb).then_with(|| ca.total_cmp_scalar(cb));
            if o != Ordering::Equal {
                return o;
            }
        }
        self.terms.len().cmp(&other.terms.len())
    }

    pub(crate) fn same_as(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }

    pub(crate) fn mentions(&self, var: Var) -> bool {
        self.terms.iter().any(|(m, _)| m.mentions(var))
    }

    fn scale(&self, k: S) -> Poly<S> {
        if k.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), *c * k)).collect(),
        }
        .normalized()
    }

    fn normalized(self) -> Self {
        Poly::from_terms(self.terms)
    }

    pub(crate) fn add(&self, other: &Self) -> Poly<S> {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Poly::from_terms(terms)
    }

    pub(crate) fn sub(&self, other: &Self) -> Poly<S> {
        self.add(&other.scale(-S::one()))
    }

    pub(crate) fn mul(&self, other: &Self) -> Poly<S> {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let (m, k) = ma.mul(mb);
                terms.push((m, *ca * *cb * k));
            }
        }
        Poly::from_terms(terms)
    }

    fn split_constant(&self) -> (S, Poly<S>) {
        let mut constant = S::zero();
        let mut rest = Vec::new();
        for (m, c) in &self.terms {
            if m.factors.is_empty() {
                constant = constant + *c;
            } else {
                rest.push((m.clone(), *c));
            }
        }
        (constant, Poly { terms: rest })
    }

    fn exp_of(arg: Poly<S>) -> Poly<S> {
        let (constant, rest) = arg.split_constant();
        let k = constant.exp();
        if rest.is_zero() {
            Poly::constant(k)
        } else {
            Poly::from_monomial(Monomial::single(Factor::Exp(rest), 1), k)
        }
    }

    fn pow_int(&self, n: i64) -> Poly<S> {
        if n == 0 {
            return Poly::constant(S::one());
        }
        if self.is_zero() {
            if n > 0 {
                return Poly::zero();
            }
            return Poly::from_monomial(
                Monomial::single(
                    Factor::Pow(Poly::zero(), Poly::constant(S::from_i64(n).unwrap())),
                    1,
                ),
                S::one(),
            );
        }
        if let [(m, c)] = self.terms.as_slice() {
            let (pm, k) = m.pow(n);
            return Poly::from_monomial(pm, c.powi(n as i32) * k);
        }
        if (1..=MAX_EXPANDED_POWER).contains(&n) {
            let mut acc = self.clone();
            for _ in 1..n {
                acc = acc.mul(self);
            }
            return acc;
        }
        // Irreducible sum: factor out the leading coefficient so that scaled
        // copies of the same sum share one factor.
        let lead = self.terms[0].1;
        let unit = self.scale(lead.recip());
        Poly::from_monomial(Monomial::single(Factor::Group(unit), n), lead.powi(n as i32))
    }

    pub(crate) fn from_expr(e: &Expr<S>) -> Poly<S> {
        match e {
            Expr::Const(c) => Poly::constant(*c),
            Expr::Var(v) => Poly::from_monomial(Monomial::single(Factor::Var(*v), 1), S::one()),
            Expr::Neg(a) => Poly::from_expr(a).scale(-S::one()),
            Expr::Add(a, b) => Poly::from_expr(a).add(&Poly::from_expr(b)),
            Expr::Sub(a, b) => Poly::from_expr(a).sub(&Poly::from_expr(b)),
            Expr::Mul(a, b) => Poly::from_expr(a).mul(&Poly::from_expr(b)),
            Expr::Div(a, b) => Poly::from_expr(a).mul(&Poly::from_expr(b).pow_int(-1)),
            Expr::Pow(a, b) => {
                let base = Poly::from_expr(a);
                let exponent = Poly::from_expr(b);
                if let Some(k) = exponent.as_constant() {
                    let kf = k.to_f64_lossy();
                    if kf.fract() == 0.0 && kf.abs() <= MAX_INTEGER_POWER {
                        return base.pow_int(kf as i64);
                    }
                    if let Some(c) = base.as_constant() {
                        return Poly::constant(c.powf(k));
                    }
                }
                match base.as_constant() {
                    Some(c) if c > S::zero() => Poly::exp_of(exponent.scale(c.ln())),
                    _ => Poly::from_monomial(
                        Monomial::single(Factor::Pow(base, exponent), 1),
                        S::one(),
                    ),
                }
            }
            Expr::Exp(a) => Poly::exp_of(Poly::from_expr(a)),
            Expr::Ln(a) => {
                let arg = Poly::from_expr(a);
                if let Some(c) = arg.as_constant() {
                    if c > S::zero() {
                        return Poly::constant(c.ln());
                    }
                }
                if let [(m, c)] = arg.terms.as_slice() {
                    if let [(Factor::Exp(inner), 1)] = m.factors.as_slice() {
                        if *c > S::zero() {
                            return inner.add(&Poly::constant(c.ln()));
                        }
                    }
                }
                Poly::from_monomial(Monomial::single(Factor::Ln(arg), 1), S::one())
            }
            Expr::Ind(h) => {
                let arg = Poly::from_expr(h);
                if let Some(c) = arg.as_constant() {
                    return Poly::constant(if c.is_zero() { S::one() } else { S::zero() });
                }
                let arg = if arg.terms[0].1 < S::zero() {
                    arg.scale(-S::one())
                } else {
                    arg
                };
                Poly::from_monomial(Monomial::single(Factor::Ind(arg), 1), S::one())
            }
        }
    }

    pub(crate) fn to_expr(&self) -> Expr<S> {
        let mut acc: Option<Expr<S>> = None;
        for (m, c) in &self.terms {
            let body = m.to_expr();
            let negative = *c < S::zero();
            let magnitude = c.abs();
            let term = if m.factors.is_empty() {
                Expr::Const(magnitude)
            } else if magnitude == S::one() {
                body
            } else {
                Expr::Mul(Box::new(Expr::Const(magnitude)), Box::new(body))
            };
            acc = Some(match (acc, negative) {
                (None, false) => term,
                (None, true) => match term {
                    Expr::Const(k) => Expr::Const(-k),
                    t => Expr::Neg(Box::new(t)),
                },
                (Some(a), false) => Expr::Add(Box::new(a), Box::new(term)),
                (Some(a), true) => Expr::Sub(Box::new(a), Box::new(term)),
            });
        }
        acc.unwrap_or_else(Expr::zero)
    }

    /// Splits `self = a * v + rest` with `a`, `rest` free of `v`.
    pub(crate) fn linear_in(&self, var: Var) -> Option<(Poly<S>, Poly<S>)> {
        let mut slope = Vec::new();
        let mut rest = Vec::new();
        for (m, c) in &self.terms {
            let power = m.power_of(var);
            let reduced = m.without(var);
            if reduced.mentions(var) {
                return None;
            }
            match power {
                0 => rest.push((m.clone(), *c)),
                1 => slope.push((reduced, *c)),
                _ => return None,
            }
        }
        Some((Poly::from_terms(slope), Poly::from_terms(rest)))
    }

    /// Writes `self` as `Σ cₖ exp(-rₖ v)` with `cₖ`, `rₖ` free of `v`, grouping
    /// terms by rate. Returns `None` when some term is not of that form.
    pub(crate) fn exp_family(&self, var: Var) -> Option<Vec<(Poly<S>, Poly<S>)>> {
        let mut groups: Vec<(Poly<S>, Poly<S>)> = Vec::new();
        for (m, c) in &self.terms {
            let mut coeff = Poly::from_monomial(Monomial::one(), *c);
            let mut rate = Poly::zero();
            for (f, p) in &m.factors {
                let piece = Poly::from_monomial(Monomial::single(f.clone(), *p), S::one());
                if !f.mentions(var) {
                    coeff = coeff.mul(&piece);
                    continue;
                }
                let Factor::Exp(arg) = f else {
                    return None;
                };
                let (slope, rest) = arg.linear_in(var)?;
                rate = slope.scale(-S::one());
                if !rest.is_zero() {
                    coeff = coeff.mul(&Poly::exp_of(rest));
                }
            }
            match groups.iter_mut().find(|(_, r)| r.same_as(&rate)) {
                Some((c0, _)) => *c0 = c0.add(&coeff),
                None => groups.push((coeff, rate)),
            }
        }
        groups.retain(|(c, _)| !c.is_zero());
        Some(groups)
    }
}
