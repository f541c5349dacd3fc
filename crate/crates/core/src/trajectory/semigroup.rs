use crate::error::{DualityError, Result};
use crate::scalar::Scalar;
use crate::summation::pairwise_sum;

use super::{ProcessLaw, Solver};

/// Law of `X_t` for a finite-state process.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionSnapshot<S> {
    pub time: S,
    pub probs: Vec<S>,
}

impl<S: Scalar> DistributionSnapshot<S> {
    pub fn expectation(&self, f: impl Fn(usize) -> S) -> S {
        let terms: Vec<S> = self.probs.iter().enumerate().map(|(i, &p)| p * f(i)).collect();
        pairwise_sum(&terms)
    }
}

/// Largest uniformization exponent handled in one pass; longer horizons are
/// split so the leading Poisson weight `e^{-Λt}` never underflows.
const MAX_POISSON_MEAN: f64 = 16.0;

/// `p₀ exp(Q t)` by uniformization: with `Λ ≥ max |q_ii|` and `P = I + Q/Λ`,
/// `p₀ exp(Qt) = Σ_n e^{-Λt} (Λt)^n / n! · p₀ Pⁿ`, truncated once the
/// remaining Poisson mass drops below `tol`.
pub fn uniformize<S: Scalar>(q: &[Vec<S>], p0: &[S], t: S, tol: S) -> Vec<S> {
    let n = p0.len();
    let rate = q
        .iter()
        .enumerate()
        .fold(S::zero(), |m, (i, row)| m.max(row[i].abs()));
    if t.is_zero() || rate.is_zero() {
        return p0.to_vec();
    }
    let tol = tol.max(S::epsilon() * S::lit(8.0));
    let chunks = ((rate * t) / S::lit(MAX_POISSON_MEAN))
        .ceil()
        .to_usize()
        .unwrap_or(1)
        .max(1);
    let tau = t / S::from_usize_lossy(chunks);
    let mean = rate * tau;
    let max_terms = (mean.to_f64_lossy() + 12.0 * mean.to_f64_lossy().sqrt() + 64.0) as usize;
    let mut p = p0.to_vec();
    for _ in 0..chunks {
        let mut v = p.clone();
        let mut weight = (-mean).exp();
        let mut cumulative = weight;
        let mut acc: Vec<S> = v.iter().map(|&x| x * weight).collect();
        let mut k = 0usize;
        while S::one() - cumulative > tol && k < max_terms {
            k += 1;
            let mut next = v.clone();
            for (i, &vi) in v.iter().enumerate() {
                if vi.is_zero() {
                    continue;
                }
                for j in 0..n {
                    next[j] = next[j] + vi * q[i][j] / rate;
                }
            }
            v = next;
            weight = weight * mean / S::from_usize_lossy(k);
            cumulative = cumulative + weight;
            for j in 0..n {
                acc[j] = acc[j] + weight * v[j];
            }
        }
        p = acc;
    }
    for x in p.iter_mut() {
        if *x < S::zero() {
            *x = S::zero();
        }
    }
    let total = pairwise_sum(&p);
    if (total - S::one()).abs() <= S::lit(1e-10) {
        for x in p.iter_mut() {
            *x = *x / total;
        }
    }
    p
}

pub fn evolve_distribution<S: Scalar>(p: &ProcessLaw<S>, t: S) -> Result<DistributionSnapshot<S>> {
    let q = p.rate_matrix().ok_or_else(|| {
        DualityError::Unsupported("distribution evolution needs a rate matrix".into())
    })?;
    let Solver::Semigroup { truncation_tol } = p.solver else {
        return Err(DualityError::Unsupported(
            "distribution evolution needs the semigroup solver".into(),
        ));
    };
    if !(t >= S::zero()) {
        return Err(DualityError::Domain(format!("negative time {t}")));
    }
    let p0 = p.initial_distribution()?;
    Ok(DistributionSnapshot {
        time: t,
        probs: uniformize(q, &p0, t, truncation_tol),
    })
}
