//! Generators with explicit domains, symbolic application to sections of a
//! duality function, and assembly of the error term `R = Φ₁ − Φ₂`.

use crate::error::{DualityError, Result};
use crate::expr::{Env, Expr, Family, Poly, Var};
use crate::scalar::Scalar;
use crate::scenario::{DualityFunction, TestFunction};
use crate::space::{StatePoint, StateSpace};

/// Multiplies a flow generator's output by `1{h ≠ 0}`.
///
/// `h` is an expression in `x` and, for exponential-family domains, the family
/// parameter `r` of the test function the generator is applied to.
#[derive(Clone, Debug, PartialEq)]
pub struct SingularMask<S> {
    pub constraint: Expr<S>,
}

/// Structural description of the admissible test functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainClass {
    /// Indicator-free expressions that can be differentiated symbolically.
    Smooth,
    /// Linear span of `exp(-r x)`, `r ≥ 0`, on a one-dimensional space.
    ExponentialFamily,
    /// Any bounded expression; for rate-matrix and pure-jump generators.
    Bounded,
}

impl DomainClass {
    pub fn name(self) -> &'static str {
        match self {
            DomainClass::Smooth => "smooth",
            DomainClass::ExponentialFamily => "exp-family",
            DomainClass::Bounded => "bounded",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JumpChannel<S> {
    /// Rate `λ(x) ≥ 0`.
    pub rate: Expr<S>,
    /// Post-jump state, one expression per coordinate.
    pub target: Vec<Expr<S>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GeneratorKind<S> {
    /// `A f = 1{mask} · b · ∇f`.
    Flow {
        drift: Vec<Expr<S>>,
        mask: Option<SingularMask<S>>,
    },
    /// `A f(x) = Σ_y Q(x, y) f(y)` on a finite set.
    RateMatrix { q: Vec<Vec<S>> },
    /// `A f(x) = Σ_k λ_k(x) (f(x'_k) − f(x))`.
    PureJump { channels: Vec<JumpChannel<S>> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator<S> {
    pub space: StateSpace<S>,
    pub kind: GeneratorKind<S>,
    pub domain: DomainClass,
}

/// A function split into an everywhere-defined part and indicator atoms:
/// `regular + Σ value · 1{constraint = 0}`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedExpr<S> {
    pub regular: Expr<S>,
    pub atoms: Vec<Atom<S>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Atom<S> {
    pub id: String,
    pub constraint: Expr<S>,
    pub value: Expr<S>,
}

/// `R(x₁, x₂) = Φ₁ − Φ₂` with its singular part kept as atoms.
pub type ErrorTerm<S> = MaskedExpr<S>;

/// Both generator actions on the duality function together with their difference.
#[derive(Clone, Debug)]
pub struct GeneratorActions<S> {
    pub phi1: MaskedExpr<S>,
    pub phi2: MaskedExpr<S>,
    pub error_term: ErrorTerm<S>,
}

impl<S: Scalar> MaskedExpr<S> {
    pub fn regular(regular: Expr<S>) -> Self {
        MaskedExpr {
            regular,
            atoms: Vec::new(),
        }
    }

    /// Pointwise value with exact zero tests on the constraints.
    pub fn eval(&self, env: &Env<'_, S>) -> Result<S> {
        self.eval_with(env, S::zero())
    }

    /// Pointwise value treating `|h| ≤ eps` as on the constraint set.
    pub fn eval_with(&self, env: &Env<'_, S>, eps: S) -> Result<S> {
        let mut value = self.regular.eval(env)?;
        for atom in &self.atoms {
            if atom.constraint.eval(env)?.abs() <= eps {
                value = value + atom.value.eval(env)?;
            }
        }
        Ok(value)
    }

    pub fn has_atoms(&self) -> bool {
        !self.atoms.is_empty()
    }

    pub fn is_identically_zero(&self) -> bool {
        self.atoms.is_empty() && self.regular.is_identically_zero()
    }

    fn negated(&self) -> MaskedExpr<S> {
        MaskedExpr {
            regular: (-self.regular.clone()).simplify(),
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    id: a.id.clone(),
                    constraint: a.constraint.clone(),
                    value: (-a.value.clone()).simplify(),
                })
                .collect(),
        }
    }

    fn prefixed(mut self, prefix: &str) -> Self {
        for a in &mut self.atoms {
            a.id = format!("{prefix}{}", a.id);
        }
        self
    }
}

impl<S: Scalar> Generator<S> {
    pub fn flow(space: StateSpace<S>, drift: Vec<Expr<S>>) -> Self {
        Generator {
            space,
            kind: GeneratorKind::Flow { drift, mask: None },
            domain: DomainClass::Smooth,
        }
    }

    pub fn rate_matrix(q: Vec<Vec<S>>) -> Self {
        Generator {
            space: StateSpace::finite_n(q.len()),
            kind: GeneratorKind::RateMatrix { q },
            domain: DomainClass::Bounded,
        }
    }

    pub fn pure_jump(space: StateSpace<S>, channels: Vec<JumpChannel<S>>) -> Self {
        Generator {
            space,
            kind: GeneratorKind::PureJump { channels },
            domain: DomainClass::Bounded,
        }
    }

    pub fn with_mask(mut self, constraint: Expr<S>) -> Self {
        if let GeneratorKind::Flow { mask, .. } = &mut self.kind {
            *mask = Some(SingularMask { constraint });
        }
        self
    }

    pub fn with_domain(mut self, domain: DomainClass) -> Self {
        self.domain = domain;
        self
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            GeneratorKind::Flow { .. } => "flow",
            GeneratorKind::RateMatrix { .. } => "rate-matrix",
            GeneratorKind::PureJump { .. } => "pure-jump",
        }
    }

    /// Checks the generator's structural invariants.
    pub fn check(&self) -> Result<(), String> {
        self.space.check()?;
        let dim = self.space.dim();
        match &self.kind {
            GeneratorKind::Flow { drift, mask } => {
                if self.space.is_finite() {
                    return Err("flow generators need a real box".into());
                }
                if drift.len() != dim {
                    return Err(format!("drift has {} components, space has {dim}", drift.len()));
                }
                for b in drift {
                    if b.mentions_family(Family::X1)
                        || b.mentions_family(Family::X2)
                        || b.mentions(Var::R)
                    {
                        return Err(format!("drift {b} may only depend on x"));
                    }
                }
                if let Some(m) = mask {
                    if m.constraint.mentions(Var::R) && self.domain != DomainClass::ExponentialFamily
                    {
                        return Err("a mask using r needs the exp-family domain".into());
                    }
                }
                if self.domain == DomainClass::ExponentialFamily && dim != 1 {
                    return Err("the exp-family domain is one-dimensional".into());
                }
                for i in 1..=256 {
                    let p = self.space.quasi_random_point(i, 0);
                    let c = p.coords();
                    for b in drift {
                        b.eval(&Env::single(&c)).map_err(|e| {
                            format!("drift {b} not finite inside the box: {e}")
                        })?;
                    }
                }
                Ok(())
            }
            GeneratorKind::RateMatrix { q } => {
                let n = self.space.cardinality().ok_or("rate matrix needs a finite set")?;
                if q.len() != n || q.iter().any(|row| row.len() != n) {
                    return Err(format!("rate matrix must be {n}x{n}"));
                }
                for (i, row) in q.iter().enumerate() {
                    let mut sum = S::zero();
                    for (j, &v) in row.iter().enumerate() {
                        if !v.is_finite() {
                            return Err(format!("Q[{i}][{j}] is not finite"));
                        }
                        if i != j && v < S::zero() {
                            return Err(format!("off-diagonal Q[{i}][{j}] = {v} is negative"));
                        }
                        sum = sum + v;
                    }
                    if sum.abs() > S::lit(1e-12) {
                        return Err(format!("row {i} of Q sums to {sum}, not 0"));
                    }
                }
                Ok(())
            }
            GeneratorKind::PureJump { channels } => {
                let points: Vec<StatePoint<S>> = match self.space.enumerate() {
                    Some(all) => all,
                    None => (1..=256).map(|i| self.space.quasi_random_point(i, 0)).collect(),
                };
                for ch in channels {
                    if ch.target.len() != dim {
                        return Err(format!("jump target has {} components, space has {dim}", ch.target.len()));
                    }
                    for p in &points {
                        let c = p.coords();
                        let env = Env::single(&c);
                        let rate = ch.rate.eval(&env).map_err(|e| e.to_string())?;
                        if rate < S::zero() {
                            return Err(format!("rate {} is negative ({rate}) at {:?}", ch.rate, &*c));
                        }
                        if rate > S::zero() {
                            let target = jump_target(&self.space, ch, &env)
                                .map_err(|e| e.to_string())?;
                            if !self.space.contains(&target) {
                                return Err(format!("jump from {:?} leaves the state space", &*c));
                            }
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// Applies the generator to `f`, regarded as a function of the coordinates
    /// of `family`; every other variable is a frozen parameter.
    pub fn apply_to(&self, f: &Expr<S>, family: Family) -> Result<MaskedExpr<S>> {
        let state_var = family.var(0);
        match &self.kind {
            GeneratorKind::Flow { drift, mask } => {
                let drift: Vec<Expr<S>> = drift
                    .iter()
                    .map(|b| b.rename_family(Family::X, family))
                    .collect();
                let mut regular = Expr::zero();
                for (i, b) in drift.iter().enumerate() {
                    regular = regular + b.clone() * f.derivative(family.var(i))?;
                }
                let family_terms = if self.domain == DomainClass::ExponentialFamily {
                    Some(exp_family_terms(f, state_var)?)
                } else {
                    None
                };
                let atoms = match (mask, family_terms) {
                    (None, _) => Vec::new(),
                    (Some(m), Some(terms)) => {
                        let h = m.constraint.rename_family(Family::X, family);
                        let mut atoms = Vec::new();
                        for (k, (coeff, rate)) in terms.into_iter().enumerate() {
                            let member = coeff * (-(rate.clone() * Expr::Var(state_var))).exp();
                            let action = drift[0].clone() * member.derivative(state_var)?;
                            let constraint = h.substitute(&|v| (v == Var::R).then(|| rate.clone()));
                            atoms.push(Atom {
                                id: format!("mask#{k}"),
                                constraint: constraint.simplify(),
                                value: (-action).simplify(),
                            });
                        }
                        atoms
                    }
                    (Some(m), None) => vec![Atom {
                        id: "mask#0".into(),
                        constraint: m.constraint.rename_family(Family::X, family).simplify(),
                        value: (-regular.clone()).simplify(),
                    }],
                };
                Ok(MaskedExpr {
                    regular: regular.simplify(),
                    atoms,
                })
            }
            GeneratorKind::RateMatrix { q } => {
                self.check_domain(f, state_var)?;
                let rows = q
                    .iter()
                    .enumerate()
                    .map(|(a, row)| {
                        row.iter()
                            .enumerate()
                            .filter(|&(b, rate)| b != a && !rate.is_zero())
                            .map(|(b, &rate)| (b, rate))
                            .collect()
                    })
                    .collect();
                Ok(MaskedExpr::regular(tabulated(f, state_var, rows)))
            }
            GeneratorKind::PureJump { channels } if self.space.is_finite() => {
                self.check_domain(f, state_var)?;
                let n = self.space.cardinality().unwrap_or(0);
                let mut rows = Vec::with_capacity(n);
                for a in 0..n {
                    let here = [S::from_usize_lossy(a)];
                    let env = Env::single(&here);
                    let mut row = Vec::new();
                    for ch in channels {
                        let rate = ch.rate.eval(&env)?;
                        if rate.is_zero() {
                            continue;
                        }
                        if let StatePoint::Label(b) = jump_target(&self.space, ch, &env)? {
                            if b != a {
                                row.push((b, rate));
                            }
                        }
                    }
                    rows.push(row);
                }
                Ok(MaskedExpr::regular(tabulated(f, state_var, rows)))
            }
            GeneratorKind::PureJump { channels } => {
                self.check_domain(f, state_var)?;
                let mut regular = Expr::zero();
                for ch in channels {
                    let rate = ch.rate.rename_family(Family::X, family);
                    let target: Vec<Expr<S>> = ch
                        .target
                        .iter()
                        .map(|t| t.rename_family(Family::X, family))
                        .collect();
                    let moved = f.substitute(&|v| match v.family() {
                        Some(fam) if fam == family => match v {
                            Var::X(i) | Var::X1(i) | Var::X2(i) => target.get(i).cloned(),
                            _ => None,
                        },
                        _ => None,
                    });
                    regular = regular + rate * (moved - f.clone());
                }
                Ok(MaskedExpr::regular(regular.simplify()))
            }
        }
    }

    fn check_domain(&self, f: &Expr<S>, state_var: Var) -> Result<()> {
        match self.domain {
            DomainClass::Bounded => Ok(()),
            DomainClass::Smooth => f.derivative(state_var).map(|_| ()),
            DomainClass::ExponentialFamily => exp_family_terms(f, state_var).map(|_| ()),
        }
    }
}

/// `Σ_a 1{v = a} Σ_{(b, λ) ∈ rows[a]} λ (f(b) − f(a))` on a finite space.
/// Zero-rate moves are absent, so `f` is only evaluated at reachable states.
fn tabulated<S: Scalar>(f: &Expr<S>, state_var: Var, rows: Vec<Vec<(usize, S)>>) -> Expr<S> {
    let at = |i: usize| f.substitute(&|v| (v == state_var).then(|| Expr::Const(S::from_usize_lossy(i))));
    let mut out = Expr::zero();
    for (a, row) in rows.into_iter().enumerate() {
        let here = at(a);
        let mut term = Expr::zero();
        for (b, rate) in row {
            term = term + Expr::Const(rate) * (at(b) - here.clone());
        }
        let selector = Expr::eq_indicator(Expr::Var(state_var), Expr::Const(S::from_usize_lossy(a)));
        out = out + selector * term;
    }
    out.simplify()
}

/// Decomposes `f = Σ cₖ exp(-rₖ v)`.
fn exp_family_terms<S: Scalar>(f: &Expr<S>, var: Var) -> Result<Vec<(Expr<S>, Expr<S>)>> {
    if f.has_indicator() {
        return Err(DualityError::Domain(format!(
            "{f} contains an indicator; not in span{{exp(-r x)}}"
        )));
    }
    let groups = Poly::from_expr(f).exp_family(var).ok_or_else(|| {
        DualityError::Domain(format!("{f} is not in span{{exp(-r x)}} as a function of {var}"))
    })?;
    Ok(groups
        .into_iter()
        .map(|(c, r)| (c.to_expr(), r.to_expr()))
        .collect())
}

pub(crate) fn jump_target<S: Scalar>(
    space: &StateSpace<S>,
    channel: &JumpChannel<S>,
    env: &Env<'_, S>,
) -> Result<StatePoint<S>> {
    let coords = channel
        .target
        .iter()
        .map(|t| t.eval(env))
        .collect::<Result<Vec<S>>>()?;
    Ok(match space {
        StateSpace::FiniteSet { .. } => {
            let v = coords[0];
            let i = v.round();
            if (v - i).abs() > S::lit(1e-9) || i < S::zero() {
                return Err(DualityError::Eval(format!("jump target {v} is not a label index")));
            }
            StatePoint::Label(i.to_usize().unwrap_or(usize::MAX))
        }
        StateSpace::RealBox { .. } => StatePoint::Real(coords),
    })
}

/// `A f (x)` for a test function.
pub fn apply_generator<S: Scalar>(
    generator: &Generator<S>,
    f: &TestFunction<S>,
    x: &StatePoint<S>,
) -> Result<S> {
    if !generator.space.contains(x) {
        return Err(DualityError::Domain(format!("{x:?} is outside the generator's space")));
    }
    let action = generator.apply_to(&f.expr, Family::X)?;
    let c = x.coords();
    action.eval(&Env::single(&c).with_r(f.param))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    First,
    Second,
}

/// `Φ₁(x₁, x₂) = A₁Ψ(·, x₂)(x₁)` for `Slot::First`, `Φ₂ = A₂Ψ(x₁, ·)(x₂)` for `Slot::Second`.
pub fn phi<S: Scalar>(
    generator: &Generator<S>,
    psi: &DualityFunction<S>,
    slot: Slot,
    x1: &StatePoint<S>,
    x2: &StatePoint<S>,
) -> Result<S> {
    let family = match slot {
        Slot::First => Family::X1,
        Slot::Second => Family::X2,
    };
    let action = generator.apply_to(&psi.expr, family)?;
    let (c1, c2) = (x1.coords(), x2.coords());
    action.eval(&Env::pair(&c1, &c2))
}

pub fn build_actions<S: Scalar>(
    a1: &Generator<S>,
    a2: &Generator<S>,
    psi: &DualityFunction<S>,
) -> Result<GeneratorActions<S>> {
    let phi1 = a1.apply_to(&psi.expr, Family::X1)?.prefixed("phi1/");
    let phi2 = a2.apply_to(&psi.expr, Family::X2)?.prefixed("phi2/");
    let mut atoms = phi1.atoms.clone();
    atoms.extend(phi2.negated().atoms);
    let error_term = MaskedExpr {
        regular: (phi1.regular.clone() - phi2.regular.clone()).simplify(),
        atoms,
    };
    Ok(GeneratorActions {
        phi1,
        phi2,
        error_term,
    })
}

/// Symbolic `R = Φ₁ − Φ₂`. Differences that stem only from a singular mask are
/// emitted as atoms rather than folded into the regular part.
pub fn build_error_term<S: Scalar>(
    a1: &Generator<S>,
    a2: &Generator<S>,
    psi: &DualityFunction<S>,
) -> Result<ErrorTerm<S>> {
    Ok(build_actions(a1, a2, psi)?.error_term)
}
