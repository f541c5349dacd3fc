//! Validators for the hypotheses and conclusions of the duality identity.

mod martingale;

pub use martingale::{
    default_test_functions, martingale_residual, MartingaleResidual, ResidualMethod,
    ResidualOptions,
};

use crate::error::{DualityError, Result};
use crate::estimator::{DualityReport, Prepared, Z95};
use crate::expr::{sign_of, Env, Family, Sign, SignContext};
use crate::quadrature::simpson_nonuniform;
use crate::scalar::Scalar;
use crate::scenario::{sample_pairs, Direction, Tolerances, BOUND_SAMPLES};
use crate::space::StatePoint;
use crate::trajectory::flow_state;

/// Slack on the sign of sampled `R` values.
pub const PREMISE_SLACK: f64 = 1e-12;
/// Slack on the sign of `g(T)`.
pub const CONCLUSION_SLACK: f64 = 1e-10;
/// Gap threshold as a multiple of the combined tolerance.
pub const DISCREPANCY_FACTOR: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratedIdentity<S> {
    pub horizon: S,
    /// `∫₀ˢ g(T) dT`.
    pub lhs: S,
    /// `∫₀ˢ f(T) dT` with atoms that are isolated in `T` removed.
    pub rhs: S,
    pub tolerance: S,
    pub pass: bool,
}

/// Simpson integrals of both curves over the grid points in `[0, horizon]`.
pub fn integrated_identity<S: Scalar>(
    report: &DualityReport<S>,
    horizon: S,
    tol: &Tolerances<S>,
) -> IntegratedIdentity<S> {
    let pts: Vec<_> = report.points.iter().filter(|p| p.t <= horizon).collect();
    let ts: Vec<S> = pts.iter().map(|p| p.t).collect();
    let g: Vec<S> = pts.iter().map(|p| p.g.value).collect();
    let f: Vec<S> = pts.iter().map(|p| p.f.value - p.isolated_atom_value()).collect();
    let half: Vec<S> = pts
        .iter()
        .map(|p| (p.g.ci_width() + p.f.ci_width()) / S::lit(2.0))
        .collect();
    let lhs = simpson_nonuniform(&ts, &g);
    let rhs = simpson_nonuniform(&ts, &f);
    let tolerance = tol.abs_tol * horizon.max(S::one())
        + tol.rel_tol * lhs.abs().max(rhs.abs())
        + simpson_nonuniform(&ts, &half).abs();
    IntegratedIdentity {
        horizon,
        lhs,
        rhs,
        tolerance,
        pass: (lhs - rhs).abs() <= tolerance,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuityProbe<S> {
    /// Largest grid spacing `δ`.
    pub step: S,
    /// `max |g(T_{k+1}) − g(T_k)|` on the grid.
    pub coarse_max: S,
    /// The same on the grid with midpoints inserted (`δ/2`).
    pub fine_max: S,
    pub pass: bool,
}

fn max_increment<S: Scalar>(values: &[S]) -> S {
    values
        .windows(2)
        .fold(S::zero(), |m, w| m.max((w[1] - w[0]).abs()))
}

/// Compares the largest increments of `g` at spacing `δ` and `δ/2`.
pub fn continuity_probe<S: Scalar>(p: &Prepared<'_, S>) -> Result<ContinuityProbe<S>> {
    let s = p.scenario;
    if !s.backend.is_exact() {
        return Err(DualityError::Unsupported(
            "the continuity probe needs an exact backend".into(),
        ));
    }
    let coarse = &s.grid.points;
    let fine = s.grid.refined().points;
    let g_at = |ts: &[S]| -> Result<Vec<S>> { ts.iter().map(|&t| Ok(p.boundary_gap(t)?.value)).collect() };
    let coarse_max = max_increment(&g_at(coarse)?);
    let fine_max = max_increment(&g_at(&fine)?);
    let step = coarse.windows(2).fold(S::zero(), |m, w| m.max(w[1] - w[0]));
    let tol = s.tolerances.abs_tol;
    Ok(ContinuityProbe {
        step,
        coarse_max,
        fine_max,
        pass: fine_max <= S::lit(0.75) * coarse_max || (coarse_max < tol && fine_max < tol),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum PremiseEvidence<S> {
    /// The sign analyzer shows `ρ` and every atom value respect the direction.
    Proven,
    /// Every state pair of a finite product was evaluated.
    Exhaustive { pairs: usize },
    /// Only sampled pairs were checked.
    Sampled { pairs: usize },
    /// Pairs where `R` has the wrong sign, with the offending value.
    Violated { points: Vec<(String, S)> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonCertificate<S> {
    pub direction: Direction,
    pub premise: PremiseEvidence<S>,
    /// Sign of the regular part and of each atom value.
    pub structural_signs: Vec<Sign>,
    /// Grid times where `g` has the wrong sign (checked only under a valid premise).
    pub conclusion_failures: Vec<S>,
    pub pass: bool,
}

fn sign_fits(direction: Direction, sign: Sign) -> bool {
    match direction {
        Direction::AtLeast => sign.is_nonnegative(),
        Direction::AtMost => sign.is_nonpositive(),
    }
}

/// State pairs visited by the exact or sampled processes at grid times.
fn visited_pairs<S: Scalar>(p: &Prepared<'_, S>) -> Vec<(StatePoint<S>, StatePoint<S>)> {
    let s = p.scenario;
    let mut out = Vec::new();
    if let Some((paths1, paths2)) = p.sampled_paths() {
        for &t in &s.grid.points {
            for (x, y) in paths1.iter().zip(paths2).take(64) {
                out.push((x.state_at(t).clone(), y.state_at(t).clone()));
            }
        }
    } else if s.process1.is_flow() && s.process2.is_flow() {
        let path = |k: u8| -> Vec<StatePoint<S>> {
            let law = if k == 1 { &s.process1 } else { &s.process2 };
            s.grid.points.iter().filter_map(|&t| flow_state(law, t).ok()).collect()
        };
        let (a, b) = (path(1), path(2));
        for x in &a {
            for y in &b {
                out.push((x.clone(), y.clone()));
            }
        }
    }
    out
}

/// Certificate for the comparison corollary: if `R` respects `direction`
/// everywhere, so does `g(T)` at every `T`.
pub fn comparison_certify<S: Scalar>(
    p: &Prepared<'_, S>,
    direction: Direction,
    report: &DualityReport<S>,
) -> ComparisonCertificate<S> {
    let s = p.scenario;
    let term = &p.actions.error_term;
    let (space1, space2) = (&s.process1.generator.space, &s.process2.generator.space);
    let mut ctx = SignContext::new();
    for i in space1.nonnegative_coords() {
        ctx = ctx.with_nonnegative(Family::X1.var(i));
    }
    for i in space2.nonnegative_coords() {
        ctx = ctx.with_nonnegative(Family::X2.var(i));
    }
    let mut structural_signs = vec![sign_of(&term.regular, &ctx)];
    structural_signs.extend(term.atoms.iter().map(|a| sign_of(&a.value, &ctx)));
    let proven = structural_signs.iter().all(|&sg| sign_fits(direction, sg));

    let exhaustive = space1.is_finite() && space2.is_finite();
    let mut pairs = sample_pairs(space1, space2, BOUND_SAMPLES);
    if !exhaustive {
        pairs.extend(visited_pairs(p));
    }
    let slack = S::lit(PREMISE_SLACK);
    let eps = s.tolerances.singular_eps;
    let mut violations = Vec::new();
    for (x1, x2) in &pairs {
        let (c1, c2) = (x1.coords(), x2.coords());
        let env = Env::pair(&c1, &c2);
        let mut values = Vec::new();
        match term.eval_with(&env, eps) {
            Ok(v) => values.push(v),
            Err(_) => continue,
        }
        if let Ok(rho) = term.regular.eval(&env) {
            for atom in &term.atoms {
                if let Ok(v) = atom.value.eval(&env) {
                    values.push(rho + v);
                }
            }
        }
        if let Some(&bad) = values.iter().find(|&&v| !direction.holds(v, slack)) {
            if violations.len() < 10 {
                violations.push((format!("({:?}, {:?})", &*c1, &*c2), bad));
            }
        }
    }
    let premise = if !violations.is_empty() {
        PremiseEvidence::Violated { points: violations }
    } else if proven {
        PremiseEvidence::Proven
    } else if exhaustive {
        PremiseEvidence::Exhaustive { pairs: pairs.len() }
    } else {
        PremiseEvidence::Sampled { pairs: pairs.len() }
    };
    let mut conclusion_failures = Vec::new();
    if !matches!(premise, PremiseEvidence::Violated { .. }) {
        let z = S::lit(Z95);
        for pt in &report.points {
            let se = pt.g.std_err.unwrap_or_else(S::zero);
            let best = match direction {
                Direction::AtLeast => pt.g.value + z * se,
                Direction::AtMost => pt.g.value - z * se,
            };
            if !direction.holds(best, S::lit(CONCLUSION_SLACK)) {
                conclusion_failures.push(pt.t);
            }
        }
    }
    let pass = !matches!(premise, PremiseEvidence::Violated { .. }) && conclusion_failures.is_empty();
    ComparisonCertificate {
        direction,
        premise,
        structural_signs,
        conclusion_failures,
        pass,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FindingClass {
    /// `f` carries an atom isolated in `T` while `g` is locally flat.
    NullSetAtom,
    /// Disappears when the inner step is halved.
    QuadratureArtifact,
    Unclassified,
}

impl FindingClass {
    pub fn name(self) -> &'static str {
        match self {
            FindingClass::NullSetAtom => "NullSetAtom",
            FindingClass::QuadratureArtifact => "QuadratureArtifact",
            FindingClass::Unclassified => "Unclassified",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscrepancyAtomFinding<S> {
    pub t: S,
    pub magnitude: S,
    pub threshold: S,
    pub class: FindingClass,
}

/// Grid points with `|g − f| > 10 (abs_tol + CI width)`.
pub fn detect_discrepancies<S: Scalar>(
    report: &DualityReport<S>,
    tol: &Tolerances<S>,
) -> Vec<DiscrepancyAtomFinding<S>> {
    let factor = S::lit(DISCREPANCY_FACTOR);
    let mut out = Vec::new();
    for (k, pt) in report.points.iter().enumerate() {
        let threshold = factor * (tol.abs_tol + pt.g.ci_width() + pt.f.ci_width());
        let magnitude = pt.gap.abs();
        if !(magnitude > threshold) {
            continue;
        }
        let flat = [k.checked_sub(1), Some(k + 1)]
            .into_iter()
            .flatten()
            .filter_map(|j| report.points.get(j))
            .all(|q| (q.g.value - pt.g.value).abs() <= magnitude / factor);
        let explained = (pt.gap + pt.isolated_atom_value()).abs() <= threshold;
        let class = if !pt.quadrature_warning && pt.isolated_atom_value() != S::zero() && explained && flat {
            FindingClass::NullSetAtom
        } else {
            FindingClass::Unclassified
        };
        out.push(DiscrepancyAtomFinding {
            t: pt.t,
            magnitude,
            threshold,
            class,
        });
    }
    out
}

/// Recomputes every finding with the inner step halved; findings that
/// vanish become [`FindingClass::QuadratureArtifact`].
pub fn confirm_findings<S: Scalar>(
    p: &Prepared<'_, S>,
    findings: Vec<DiscrepancyAtomFinding<S>>,
) -> Result<Vec<DiscrepancyAtomFinding<S>>> {
    let step = p.scenario.grid.inner_step / S::lit(2.0);
    findings
        .into_iter()
        .map(|mut f| {
            let again = p.point_with_step(f.t, step)?;
            if !(again.gap.abs() > f.threshold) {
                f.class = FindingClass::QuadratureArtifact;
            }
            Ok(f)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::{builtin, builtin_counterexample};

    #[test]
    fn counterexample_checks() {
        let s = builtin_counterexample::<f64>();
        let p = Prepared::new(&s).unwrap();
        let report = p.curves();
        let id = integrated_identity(&report, 2.0, &s.tolerances);
        assert!(id.pass && id.lhs == 0.0 && id.rhs.abs() <= 1e-10, "{id:?}");
        let probe = continuity_probe(&p).unwrap();
        assert!(probe.pass && probe.coarse_max == 0.0);
        let cert = comparison_certify(&p, Direction::AtLeast, &report);
        assert!(cert.pass);
        assert_eq!(cert.premise, PremiseEvidence::Proven);
        assert!(!comparison_certify(&p, Direction::AtMost, &report).pass);
        let findings = confirm_findings(&p, detect_discrepancies(&report, &s.tolerances)).unwrap();
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].t, 1.0);
        assert_eq!(findings[0].class, FindingClass::NullSetAtom);
    }

    #[test]
    fn offgrid_counterexample_has_no_findings() {
        let s = builtin::<f64>("counterexample-offgrid").unwrap();
        let report = crate::estimator::duality_curves(&s).unwrap();
        assert!(detect_discrepancies(&report, &s.tolerances).is_empty());
    }

    #[test]
    fn zero_scenario_certifies_both_directions() {
        let s = builtin::<f64>("self-dual-zero").unwrap();
        let p = Prepared::new(&s).unwrap();
        let report = p.curves();
        for d in [Direction::AtLeast, Direction::AtMost] {
            assert!(comparison_certify(&p, d, &report).pass);
        }
        assert!(detect_discrepancies(&report, &s.tolerances).is_empty());
        assert!(continuity_probe(&p).unwrap().pass);
    }
}
