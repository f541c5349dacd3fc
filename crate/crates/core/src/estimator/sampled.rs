//! Monte Carlo estimators over two independent sets of sampled paths.
//!
//! Expectations of a function of `(X¹, X²)` are V-statistics over all replica
//! pairs. Standard errors use the first-order (Hoeffding) projections:
//! `SE² = Var(h₁)/N₁ + Var(h₂)/N₂`.

use rayon::prelude::*;

use crate::error::Result;
use crate::expr::Env;
use crate::generator::MaskedExpr;
use crate::scalar::Scalar;
use crate::scenario::Scenario;
use crate::space::StatePoint;
use crate::summation::{mean, pairwise_sum, variance};
use crate::trajectory::{sample_path, StreamId, Trajectory};

use super::Estimate;

/// Upper limit on replica pairs evaluated for non-finite spaces.
pub const MAX_PAIRS: usize = 1_000_000;

/// Empirical occupation of a finite space by `N` replicas: counts on each
/// constant piece and the running integrals `C_b(u) = ∫₀ᵘ p̂_s(b) ds`.
#[derive(Clone, Debug)]
pub(crate) struct Occupation<S> {
    replicas: S,
    times: Vec<S>,
    counts: Vec<Vec<u32>>,
    cumulative: Vec<Vec<S>>,
}

impl<S: Scalar> Occupation<S> {
    pub fn new(paths: &[Trajectory<S>], states: usize) -> Self {
        let mut initial = vec![0u32; states];
        let mut events = Vec::new();
        for path in paths {
            initial[label(&path.states[0])] += 1;
            for k in 1..path.states.len() {
                events.push((path.times[k], label(&path.states[k - 1]), label(&path.states[k])));
            }
        }
        events.sort_by(|a, b| a.0.total_cmp_scalar(&b.0));
        let replicas = S::from_usize_lossy(paths.len());
        let mut times = vec![S::zero()];
        let mut counts = vec![initial];
        let mut cumulative = vec![vec![S::zero(); states]];
        for (t, from, to) in events {
            let k = times.len() - 1;
            if t > times[k] {
                let dt = t - times[k];
                let next: Vec<S> = (0..states)
                    .map(|b| cumulative[k][b] + S::from_usize_lossy(counts[k][b] as usize) / replicas * dt)
                    .collect();
                times.push(t);
                counts.push(counts[k].clone());
                cumulative.push(next);
            }
            let last = counts.last_mut().expect("nonempty");
            last[from] -= 1;
            last[to] += 1;
        }
        Occupation {
            replicas,
            times,
            counts,
            cumulative,
        }
    }

    fn piece(&self, u: S) -> usize {
        self.times.partition_point(|&s| s <= u).saturating_sub(1)
    }

    /// `p̂_u`, right-continuous in `u`.
    pub fn probs_at(&self, u: S) -> Vec<S> {
        let k = self.piece(u);
        self.counts[k]
            .iter()
            .map(|&c| S::from_usize_lossy(c as usize) / self.replicas)
            .collect()
    }

    /// `C_b(u)` for every state `b`.
    pub fn cumulative_at(&self, u: S) -> Vec<S> {
        let k = self.piece(u);
        let dt = u - self.times[k];
        self.cumulative[k]
            .iter()
            .zip(&self.counts[k])
            .map(|(&c, &n)| c + S::from_usize_lossy(n as usize) / self.replicas * dt)
            .collect()
    }
}

fn label<S: Scalar>(x: &StatePoint<S>) -> usize {
    x.label().expect("finite-space path")
}

pub(crate) struct Samples<S> {
    pub paths1: Vec<Trajectory<S>>,
    pub paths2: Vec<Trajectory<S>>,
    occupation: Option<(Occupation<S>, Occupation<S>)>,
}

pub(crate) fn sample_all<S: Scalar>(s: &Scenario<S>, replicas: usize, seed: u64) -> Result<Samples<S>> {
    let horizon = s.grid.horizon();
    let draw = |process: &crate::trajectory::ProcessLaw<S>, k: u8| {
        (0..replicas as u64)
            .into_par_iter()
            .map(|i| sample_path(process, horizon, StreamId::new(seed, k, i)))
            .collect::<Result<Vec<_>>>()
    };
    let paths1 = draw(&s.process1, 1)?;
    let paths2 = draw(&s.process2, 2)?;
    let occupation = match (
        s.process1.generator.space.cardinality(),
        s.process2.generator.space.cardinality(),
    ) {
        (Some(n1), Some(n2)) => Some((Occupation::new(&paths1, n1), Occupation::new(&paths2, n2))),
        _ => None,
    };
    Ok(Samples {
        paths1,
        paths2,
        occupation,
    })
}

fn projected<S: Scalar>(value: S, h1: &[S], h2: &[S]) -> Estimate<S> {
    let se2 = variance(h1) / S::from_usize_lossy(h1.len()) + variance(h2) / S::from_usize_lossy(h2.len());
    Estimate {
        value,
        std_err: Some(se2.max(S::zero()).sqrt()),
    }
}

/// Replica pairs for non-finite spaces: all pairs when there are at most
/// [`MAX_PAIRS`], otherwise cyclic diagonals `(i, (i + c) mod N₂)`.
fn pair_set(n1: usize, n2: usize) -> Vec<(usize, usize)> {
    if n1 * n2 <= MAX_PAIRS {
        return (0..n1).flat_map(|i| (0..n2).map(move |j| (i, j))).collect();
    }
    let diagonals = (MAX_PAIRS / n1.max(n2)).max(1);
    let stride = (n2 / diagonals).max(1);
    (0..diagonals)
        .flat_map(|c| (0..n1.max(n2)).map(move |i| (i % n1, (i + c * stride) % n2)))
        .collect()
}

/// Per-replica means of a kernel over a pair set.
fn pair_projections<S: Scalar>(
    pairs: &[(usize, usize)],
    values: &[S],
    n1: usize,
    n2: usize,
) -> (Vec<S>, Vec<S>) {
    let mut by1 = vec![Vec::new(); n1];
    let mut by2 = vec![Vec::new(); n2];
    for (&(i, j), &v) in pairs.iter().zip(values) {
        by1[i].push(v);
        by2[j].push(v);
    }
    let collapse = |groups: Vec<Vec<S>>| -> Vec<S> {
        groups.into_iter().filter(|g| !g.is_empty()).map(|g| mean(&g)).collect()
    };
    (collapse(by1), collapse(by2))
}

impl<S: Scalar> Samples<S> {
    pub fn boundary_gap(&self, psi: &[Vec<S>], eval_psi: impl Fn(&StatePoint<S>, &StatePoint<S>) -> Result<S> + Sync, big_t: S) -> Result<Estimate<S>> {
        if let Some((o1, o2)) = &self.occupation {
            let (p1t, p10) = (o1.probs_at(big_t), o1.probs_at(S::zero()));
            let (p2t, p20) = (o2.probs_at(big_t), o2.probs_at(S::zero()));
            let row = |a: usize, p: &[S]| pairwise_sum(&p.iter().enumerate().map(|(b, &w)| w * psi[a][b]).collect::<Vec<_>>());
            let col = |b: usize, p: &[S]| pairwise_sum(&p.iter().enumerate().map(|(a, &w)| w * psi[a][b]).collect::<Vec<_>>());
            let h1: Vec<S> = self
                .paths1
                .iter()
                .map(|x| row(label(x.state_at(big_t)), &p20) - row(label(&x.states[0]), &p2t))
                .collect();
            let h2: Vec<S> = self
                .paths2
                .iter()
                .map(|y| col(label(&y.states[0]), &p1t) - col(label(y.state_at(big_t)), &p10))
                .collect();
            let value = mean(&h1);
            return Ok(projected(value, &h1, &h2));
        }
        let pairs = pair_set(self.paths1.len(), self.paths2.len());
        let values = pairs
            .par_iter()
            .map(|&(i, j)| {
                let (x, y) = (&self.paths1[i], &self.paths2[j]);
                Ok(eval_psi(x.state_at(big_t), &y.states[0])? - eval_psi(&x.states[0], y.state_at(big_t))?)
            })
            .collect::<Result<Vec<S>>>()?;
        let (h1, h2) = pair_projections(&pairs, &values, self.paths1.len(), self.paths2.len());
        Ok(projected(mean(&values), &h1, &h2))
    }

    /// `∫₀ᵀ E[R(X¹_t, X²_{T−t})] dt`, integrated exactly over the constant
    /// pieces of the sampled paths.
    pub fn error_integral(&self, r_table: Option<&[Vec<S>]>, r: &MaskedExpr<S>, big_t: S) -> Result<Estimate<S>> {
        if big_t <= S::zero() {
            return Ok(Estimate::exact(S::zero()));
        }
        if let (Some((o1, o2)), Some(table)) = (&self.occupation, r_table) {
            let h1: Vec<S> = self
                .paths1
                .iter()
                .map(|x| {
                    let mut parts = Vec::new();
                    for (s, e, a) in x.segments() {
                        if s >= big_t {
                            break;
                        }
                        let e = e.min(big_t);
                        let (hi, lo) = (o2.cumulative_at(big_t - s), o2.cumulative_at(big_t - e));
                        let a = label(a);
                        for b in 0..hi.len() {
                            parts.push(table[a][b] * (hi[b] - lo[b]));
                        }
                    }
                    pairwise_sum(&parts)
                })
                .collect();
            let h2: Vec<S> = self
                .paths2
                .iter()
                .map(|y| {
                    let mut parts = Vec::new();
                    for (s, e, b) in y.segments() {
                        if s >= big_t {
                            break;
                        }
                        let e = e.min(big_t);
                        let (hi, lo) = (o1.cumulative_at(big_t - s), o1.cumulative_at(big_t - e));
                        let b = label(b);
                        for a in 0..hi.len() {
                            parts.push(table[a][b] * (hi[a] - lo[a]));
                        }
                    }
                    pairwise_sum(&parts)
                })
                .collect();
            return Ok(projected(mean(&h1), &h1, &h2));
        }
        let pairs = pair_set(self.paths1.len(), self.paths2.len());
        let values = pairs
            .par_iter()
            .map(|&(i, j)| overlap_integral(&self.paths1[i], &self.paths2[j], r, big_t))
            .collect::<Result<Vec<S>>>()?;
        let (h1, h2) = pair_projections(&pairs, &values, self.paths1.len(), self.paths2.len());
        Ok(projected(mean(&values), &h1, &h2))
    }

    /// `E|Φ(X¹_s, X²_t)|` on a product of nodes.
    pub fn abs_expectations(&self, table: Option<&[Vec<S>]>, phi: &MaskedExpr<S>, s_nodes: &[S], t_nodes: &[S]) -> Result<Vec<Vec<S>>> {
        if let (Some((o1, o2)), Some(table)) = (&self.occupation, table) {
            let p1: Vec<Vec<S>> = s_nodes.iter().map(|&s| o1.probs_at(s)).collect();
            let p2: Vec<Vec<S>> = t_nodes.iter().map(|&t| o2.probs_at(t)).collect();
            return Ok(p1.iter().map(|a| p2.iter().map(|b| table_expectation(table, a, b)).collect()).collect());
        }
        let n = self.paths1.len().min(self.paths2.len()).min(256);
        s_nodes
            .iter()
            .map(|&s| {
                t_nodes
                    .iter()
                    .map(|&t| {
                        let vals = (0..n)
                            .map(|i| {
                                let (a, b) = (self.paths1[i].state_at(s).coords(), self.paths2[i].state_at(t).coords());
                                Ok(phi.eval(&Env::pair(&a, &b))?.abs())
                            })
                            .collect::<Result<Vec<S>>>()?;
                        Ok(mean(&vals))
                    })
                    .collect()
            })
            .collect()
    }
}

pub(crate) fn table_expectation<S: Scalar>(table: &[Vec<S>], p1: &[S], p2: &[S]) -> S {
    let mut terms = Vec::with_capacity(p1.len() * p2.len());
    for (a, &wa) in p1.iter().enumerate() {
        if wa.is_zero() {
            continue;
        }
        for (b, &wb) in p2.iter().enumerate() {
            terms.push(wa * wb * table[a][b]);
        }
    }
    pairwise_sum(&terms)
}

/// `∫₀ᵀ R(x_t, y_{T−t}) dt` for two piecewise-constant paths.
fn overlap_integral<S: Scalar>(x: &Trajectory<S>, y: &Trajectory<S>, r: &MaskedExpr<S>, big_t: S) -> Result<S> {
    let mut cuts: Vec<S> = x.times.iter().copied().filter(|&t| t < big_t).collect();
    cuts.extend(y.times.iter().map(|&u| big_t - u).filter(|&t| t > S::zero()));
    cuts.push(S::zero());
    cuts.push(big_t);
    cuts.sort_by(|a, b| a.total_cmp_scalar(b));
    cuts.dedup();
    let mut parts = Vec::with_capacity(cuts.len());
    for w in cuts.windows(2) {
        let mid = (w[0] + w[1]) / S::lit(2.0);
        let (a, b) = (x.state_at(mid).coords(), y.state_at(big_t - mid).coords());
        parts.push(r.eval(&Env::pair(&a, &b))? * (w[1] - w[0]));
    }
    Ok(pairwise_sum(&parts))
}
