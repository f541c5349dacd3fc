//! Both sides of the duality identity over a time grid.
//!
//! `g(T) = E[Ψ(X¹_T, X²_0)] − E[Ψ(X¹_0, X²_T)]` and
//! `f(T) = ∫₀ᵀ E[R(X¹_t, X²_{T−t})] dt`, with the singular atoms of `R`
//! integrated separately.

pub(crate) mod atoms;
mod sampled;

use rayon::prelude::*;

use crate::error::{DualityError, Result};
use crate::expr::Env;
use crate::generator::{build_actions, GeneratorActions, MaskedExpr};
use crate::quadrature::{simpson_refined, simpson_weights};
use crate::scalar::Scalar;
use crate::scenario::{validate_scenario, Backend, Scenario};
use crate::space::StatePoint;
use crate::summation::pairwise_sum;
use crate::trajectory::{evolve_distribution, flow_state, Trajectory};

pub use sampled::MAX_PAIRS;
use sampled::{sample_all, table_expectation, Samples};

/// Two-sided normal quantiles.
pub const Z95: f64 = 1.959963984540054;
pub const Z99: f64 = 2.5758293035489004;

/// Interval count per axis of the coarse tensor Simpson rule in
/// [`hypothesis_estimate`]; the refined rule doubles it.
pub const HYPOTHESIS_INTERVALS: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate<S> {
    pub value: S,
    /// `None` for exact backends.
    pub std_err: Option<S>,
}

impl<S: Scalar> Estimate<S> {
    pub fn exact(value: S) -> Self {
        Estimate {
            value,
            std_err: None,
        }
    }

    pub fn ci(&self, z: f64) -> Option<(S, S)> {
        self.std_err.map(|se| {
            let half = S::lit(z) * se;
            (self.value - half, self.value + half)
        })
    }

    pub fn ci95(&self) -> Option<(S, S)> {
        self.ci(Z95)
    }

    /// Width of the 95% interval, zero for exact values.
    pub fn ci_width(&self) -> S {
        self.ci95().map_or(S::zero(), |(lo, hi)| hi - lo)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AtomContribution<S> {
    pub atom_id: String,
    /// Lebesgue measure of the active `t`-set in `[0, T]`.
    pub measure: S,
    pub value: S,
    /// The atom is active at this `T` but not at `T ± inner_step`.
    pub isolated_in_t: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorIntegral<S> {
    pub estimate: Estimate<S>,
    pub atoms: Vec<AtomContribution<S>>,
    /// `|Simpson(step/2) − Simpson(step)|` summed over all parts.
    pub refinement: S,
    pub quadrature_warning: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualityPoint<S> {
    pub t: S,
    pub g: Estimate<S>,
    pub f: Estimate<S>,
    pub gap: S,
    pub atoms: Vec<AtomContribution<S>>,
    pub quadrature_warning: bool,
}

impl<S: Scalar> DualityPoint<S> {
    pub fn atom_measure(&self) -> S {
        self.atoms.iter().fold(S::zero(), |a, c| a + c.measure)
    }

    /// Part of `f(T)` carried by atoms that are isolated in `T`.
    pub fn isolated_atom_value(&self) -> S {
        self.atoms
            .iter()
            .filter(|c| c.isolated_in_t)
            .fold(S::zero(), |a, c| a + c.value)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualityReport<S> {
    pub points: Vec<DualityPoint<S>>,
    /// Grid points whose evaluation failed, with the error message.
    pub failures: Vec<(S, String)>,
    pub exact: bool,
}

impl<S: Scalar> DualityReport<S> {
    pub fn at(&self, t: S) -> Option<&DualityPoint<S>> {
        self.points.iter().find(|p| p.t == t)
    }
}

/// Tensor Simpson estimates of `∫₀ᵀ∫₀ᵀ E|Φᵢ(X¹_s, X²_t)| ds dt`.
///
/// Atom parts of `Φᵢ` live on curves of the `(s, t)` square and are left out.
#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisEstimate<S> {
    pub horizon: S,
    pub phi1: S,
    pub phi2: S,
    /// Interval count per axis of the reported values.
    pub intervals: usize,
    /// Values at twice the resolution.
    pub refined: (S, S),
    /// Both refinements agree within `rel_tol`.
    pub stable: bool,
}

/// Symbolic data and, for Monte Carlo, sampled paths shared by all grid points.
pub struct Prepared<'a, S: Scalar> {
    pub scenario: &'a Scenario<S>,
    pub actions: GeneratorActions<S>,
    tables: Option<Tables<S>>,
    samples: Option<Samples<S>>,
}

struct Tables<S> {
    psi: Vec<Vec<S>>,
    r: Vec<Vec<S>>,
    phi1_abs: Vec<Vec<S>>,
    phi2_abs: Vec<Vec<S>>,
}

fn table<S: Scalar>(n1: usize, n2: usize, f: impl Fn(&[S], &[S]) -> Result<S>) -> Result<Vec<Vec<S>>> {
    (0..n1)
        .map(|a| {
            (0..n2)
                .map(|b| f(&[S::from_usize_lossy(a)], &[S::from_usize_lossy(b)]))
                .collect()
        })
        .collect()
}

fn eval_masked<S: Scalar>(m: &MaskedExpr<S>, eps: S) -> impl Fn(&[S], &[S]) -> Result<S> + '_ {
    move |a, b| m.eval_with(&Env::pair(a, b), eps)
}

impl<'a, S: Scalar> Prepared<'a, S> {
    pub fn new(s: &'a Scenario<S>) -> Result<Self> {
        validate_scenario(s).into_result()?;
        let actions = build_actions(&s.process1.generator, &s.process2.generator, &s.psi)?;
        let eps = s.tolerances.singular_eps;
        let tables = match (
            s.process1.generator.space.cardinality(),
            s.process2.generator.space.cardinality(),
        ) {
            (Some(n1), Some(n2)) => Some(Tables {
                psi: table(n1, n2, |a, b| s.psi.expr.eval(&Env::pair(a, b)))?,
                r: table(n1, n2, eval_masked(&actions.error_term, eps))?,
                phi1_abs: table(n1, n2, |a, b| Ok(eval_masked(&actions.phi1, eps)(a, b)?.abs()))?,
                phi2_abs: table(n1, n2, |a, b| Ok(eval_masked(&actions.phi2, eps)(a, b)?.abs()))?,
            }),
            _ => None,
        };
        let samples = match s.backend {
            Backend::MonteCarlo { replicas, seed } => Some(sample_all(s, replicas, seed)?),
            _ => None,
        };
        Ok(Prepared {
            scenario: s,
            actions,
            tables,
            samples,
        })
    }

    pub fn sampled_paths(&self) -> Option<(&[Trajectory<S>], &[Trajectory<S>])> {
        self.samples
            .as_ref()
            .map(|s| (s.paths1.as_slice(), s.paths2.as_slice()))
    }

    fn check_time(&self, t: S) -> Result<()> {
        if t >= S::zero() && t <= self.scenario.grid.horizon() {
            Ok(())
        } else {
            Err(DualityError::Domain(format!(
                "T = {t} is outside [0, {}]",
                self.scenario.grid.horizon()
            )))
        }
    }

    /// Exact law of process `k` at time `t`: probability vector (finite) or
    /// a single point (flow).
    fn law(&self, k: u8, t: S) -> Result<Law<S>> {
        let p = if k == 1 { &self.scenario.process1 } else { &self.scenario.process2 };
        if p.is_flow() {
            Ok(Law::Point(flow_state(p, t)?))
        } else {
            Ok(Law::Probs(evolve_distribution(p, t)?.probs))
        }
    }

    /// `E[k(X¹, X²)]` under independent exact laws, using a finite table when
    /// available and the expression otherwise.
    fn pair_mean(
        &self,
        l1: &Law<S>,
        l2: &Law<S>,
        table: Option<&[Vec<S>]>,
        eval: &dyn Fn(&[S], &[S]) -> Result<S>,
    ) -> Result<S> {
        match (l1, l2, table) {
            (Law::Probs(p1), Law::Probs(p2), Some(t)) => Ok(table_expectation(t, p1, p2)),
            (Law::Point(a), Law::Point(b), _) => eval(&a.coords(), &b.coords()),
            _ => Err(DualityError::Unsupported(
                "exact backends need two flows or two finite chains".into(),
            )),
        }
    }

    pub fn boundary_gap(&self, big_t: S) -> Result<Estimate<S>> {
        self.check_time(big_t)?;
        let psi_eval = |a: &[S], b: &[S]| self.scenario.psi.expr.eval(&Env::pair(a, b));
        if let Some(samples) = &self.samples {
            let empty = Vec::new();
            let psi = self.tables.as_ref().map_or(&empty, |t| &t.psi);
            return samples.boundary_gap(
                psi,
                |x: &StatePoint<S>, y: &StatePoint<S>| self.scenario.psi.eval(x, y),
                big_t,
            );
        }
        let psi = self.tables.as_ref().map(|t| t.psi.as_slice());
        let (l1t, l10) = (self.law(1, big_t)?, self.law(1, S::zero())?);
        let (l2t, l20) = (self.law(2, big_t)?, self.law(2, S::zero())?);
        let first = self.pair_mean(&l1t, &l20, psi, &psi_eval)?;
        let second = self.pair_mean(&l10, &l2t, psi, &psi_eval)?;
        Ok(Estimate::exact(first - second))
    }

    pub fn error_integral(&self, big_t: S) -> Result<ErrorIntegral<S>> {
        self.error_integral_with_step(big_t, self.scenario.grid.inner_step)
    }

    /// [`Prepared::error_integral`] at an explicit inner step.
    pub fn error_integral_with_step(&self, big_t: S, inner_step: S) -> Result<ErrorIntegral<S>> {
        self.check_time(big_t)?;
        let s = self.scenario;
        let term = &self.actions.error_term;
        let abs_tol = s.tolerances.abs_tol;
        if let Some(samples) = &self.samples {
            if term.has_atoms() {
                return Err(DualityError::Unsupported(
                    "singular atoms need an exact flow backend".into(),
                ));
            }
            let table = self.tables.as_ref().map(|t| t.r.as_slice());
            let estimate = samples.error_integral(table, term, big_t)?;
            return Ok(ErrorIntegral {
                estimate,
                atoms: Vec::new(),
                refinement: S::zero(),
                quadrature_warning: false,
            });
        }

        let r_table = self.tables.as_ref().map(|t| t.r.as_slice());
        let regular = &term.regular;
        let regular_eval = |a: &[S], b: &[S]| regular.eval(&Env::pair(a, b));
        let (mut value, mut refinement) = (S::zero(), S::zero());
        let regular_is_zero = regular.is_identically_zero()
            || r_table.is_some_and(|t| t.iter().flatten().all(|v| v.is_zero()));
        if !regular_is_zero && big_t > S::zero() {
            let q = simpson_refined(S::zero(), big_t, inner_step, |t| {
                let (l1, l2) = (self.law(1, t)?, self.law(2, big_t - t)?);
                self.pair_mean(&l1, &l2, r_table, &regular_eval)
            })?;
            value = q.coarse;
            refinement = q.discrepancy();
        }

        let eps = s.tolerances.singular_eps;
        let mut contributions = Vec::new();
        for atom in &term.atoms {
            let traced = atoms::trace(atom, &s.process1, &s.process2, big_t, inner_step, eps)?;
            refinement = refinement + traced.refinement;
            if traced.measure.is_zero() {
                continue;
            }
            let horizon = s.grid.horizon();
            let mut neighbours_active = false;
            for probe in [big_t - inner_step, big_t + inner_step] {
                if probe > S::zero() && probe <= horizon {
                    let near = atoms::trace(atom, &s.process1, &s.process2, probe, inner_step, eps)?;
                    neighbours_active |= !near.measure.is_zero();
                }
            }
            value = value + traced.value;
            contributions.push(AtomContribution {
                atom_id: atom.id.clone(),
                measure: traced.measure,
                value: traced.value,
                isolated_in_t: !neighbours_active,
            });
        }
        Ok(ErrorIntegral {
            estimate: Estimate::exact(value),
            atoms: contributions,
            refinement,
            quadrature_warning: refinement > abs_tol,
        })
    }

    pub fn point(&self, big_t: S) -> Result<DualityPoint<S>> {
        self.point_with_step(big_t, self.scenario.grid.inner_step)
    }

    pub fn point_with_step(&self, big_t: S, inner_step: S) -> Result<DualityPoint<S>> {
        let g = self.boundary_gap(big_t)?;
        let f = self.error_integral_with_step(big_t, inner_step)?;
        Ok(DualityPoint {
            t: big_t,
            g,
            gap: g.value - f.estimate.value,
            f: f.estimate,
            atoms: f.atoms,
            quadrature_warning: f.quadrature_warning,
        })
    }

    pub fn curves(&self) -> DualityReport<S> {
        let results: Vec<(S, Result<DualityPoint<S>>)> = self
            .scenario
            .grid
            .points
            .par_iter()
            .map(|&t| (t, self.point(t)))
            .collect();
        let mut points = Vec::new();
        let mut failures = Vec::new();
        for (t, r) in results {
            match r {
                Ok(p) => points.push(p),
                Err(e) => failures.push((t, e.to_string())),
            }
        }
        DualityReport {
            points,
            failures,
            exact: self.scenario.backend.is_exact(),
        }
    }

    fn abs_table(&self, which: u8) -> Option<&[Vec<S>]> {
        self.tables
            .as_ref()
            .map(|t| if which == 1 { t.phi1_abs.as_slice() } else { t.phi2_abs.as_slice() })
    }

    fn double_integral(&self, which: u8, big_t: S, n: usize) -> Result<S> {
        let h = big_t / S::from_usize_lossy(n);
        let nodes: Vec<S> = (0..=n)
            .map(|i| if i == n { big_t } else { S::from_usize_lossy(i) * h })
            .collect();
        let weights = simpson_weights(n, h);
        let phi = if which == 1 { &self.actions.phi1 } else { &self.actions.phi2 };
        let table = self.abs_table(which);
        let grid: Vec<Vec<S>> = if let Some(samples) = &self.samples {
            samples.abs_expectations(table, phi, &nodes, &nodes)?
        } else {
            let l1 = nodes.iter().map(|&s| self.law(1, s)).collect::<Result<Vec<_>>>()?;
            let l2 = nodes.iter().map(|&t| self.law(2, t)).collect::<Result<Vec<_>>>()?;
            let eval = |a: &[S], b: &[S]| Ok(phi.regular.eval(&Env::pair(a, b))?.abs());
            l1.iter()
                .map(|a| l2.iter().map(|b| self.pair_mean(a, b, table, &eval)).collect())
                .collect::<Result<_>>()?
        };
        let rows: Vec<S> = grid
            .iter()
            .zip(&weights)
            .map(|(row, &wi)| {
                let terms: Vec<S> = row.iter().zip(&weights).map(|(&v, &wj)| v * wj).collect();
                wi * pairwise_sum(&terms)
            })
            .collect();
        Ok(pairwise_sum(&rows))
    }

    pub fn hypothesis_estimate(&self, big_t: S) -> Result<HypothesisEstimate<S>> {
        self.check_time(big_t)?;
        let n = HYPOTHESIS_INTERVALS;
        if big_t.is_zero() {
            return Ok(HypothesisEstimate {
                horizon: big_t,
                phi1: S::zero(),
                phi2: S::zero(),
                intervals: n,
                refined: (S::zero(), S::zero()),
                stable: true,
            });
        }
        let (phi1, phi2) = (self.double_integral(1, big_t, n)?, self.double_integral(2, big_t, n)?);
        let refined = (
            self.double_integral(1, big_t, 2 * n)?,
            self.double_integral(2, big_t, 2 * n)?,
        );
        let tol = self.scenario.tolerances;
        let close = |a: S, b: S| (a - b).abs() <= tol.rel_tol * a.abs().max(b.abs()) + tol.abs_tol;
        let stable = close(phi1, refined.0) && close(phi2, refined.1);
        Ok(HypothesisEstimate {
            horizon: big_t,
            phi1,
            phi2,
            intervals: n,
            refined,
            stable,
        })
    }
}

enum Law<S> {
    Point(StatePoint<S>),
    Probs(Vec<S>),
}

pub fn boundary_gap<S: Scalar>(s: &Scenario<S>, big_t: S) -> Result<Estimate<S>> {
    Prepared::new(s)?.boundary_gap(big_t)
}

pub fn error_integral<S: Scalar>(s: &Scenario<S>, big_t: S) -> Result<ErrorIntegral<S>> {
    Prepared::new(s)?.error_integral(big_t)
}

pub fn hypothesis_estimate<S: Scalar>(s: &Scenario<S>, big_t: S) -> Result<HypothesisEstimate<S>> {
    Prepared::new(s)?.hypothesis_estimate(big_t)
}

/// `g` and `f` at every grid point. Per-point failures are collected in the
/// report instead of aborting the remaining points.
pub fn duality_curves<S: Scalar>(s: &Scenario<S>) -> Result<DualityReport<S>> {
    Ok(Prepared::new(s)?.curves())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::{builtin, builtin_counterexample};

    #[test]
    fn counterexample_values() {
        let s = builtin_counterexample::<f64>();
        let p = Prepared::new(&s).unwrap();
        let target = (1.0 - std::f64::consts::E).exp();
        for t in [0.0, 0.5, 1.0, 1.7] {
            assert_eq!(p.boundary_gap(t).unwrap().value, 0.0);
        }
        let at_one = p.error_integral(1.0).unwrap();
        assert!((at_one.estimate.value - target).abs() <= 1e-12 * target);
        assert_eq!(at_one.atoms.len(), 1);
        assert!(at_one.atoms[0].isolated_in_t);
        assert_eq!(at_one.atoms[0].measure, 1.0);
        assert_eq!(p.error_integral(0.5).unwrap().estimate.value, 0.0);
    }

    #[test]
    fn self_dual_is_zero() {
        let s = builtin::<f64>("self-dual-zero").unwrap();
        let report = duality_curves(&s).unwrap();
        assert!(report.failures.is_empty());
        for pt in &report.points {
            assert!(pt.g.value.abs() < 1e-10, "{}", pt.g.value);
            assert_eq!(pt.f.value, 0.0);
        }
    }

    #[test]
    fn times_outside_the_grid_are_rejected() {
        let s = builtin_counterexample::<f64>();
        assert!(boundary_gap(&s, 2.5).is_err());
        assert!(error_integral(&s, -0.1).is_err());
    }

    #[test]
    fn hypothesis_estimate_is_finite_and_stable() {
        let s = builtin_counterexample::<f64>();
        let h = hypothesis_estimate(&s, 1.0).unwrap();
        assert!(h.phi2.is_finite() && h.phi2 > 0.0);
        assert!(h.stable, "{h:?}");
        // The regular parts of Φ₁ and Φ₂ coincide.
        assert!((h.phi1 - h.phi2).abs() < 1e-15);
    }
}
