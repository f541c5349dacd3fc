use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{DualityError, Result};
use crate::expr::Env;
use crate::generator::{jump_target, GeneratorKind};
use crate::scalar::Scalar;
use crate::space::StatePoint;

use super::{Initial, ProcessLaw, Solver};

/// Identifies one independent random stream: `(master seed, process, replica)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub seed: u64,
    pub process: u8,
    pub replica: u64,
}

impl StreamId {
    pub fn new(seed: u64, process: u8, replica: u64) -> Self {
        StreamId { seed, process, replica }
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((u64::from(self.process) << 40) | self.replica);
        rng
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrajectoryKind {
    Exact,
    Sampled { seed: u64, replica: u64 },
}

/// Piecewise-constant cadlag path: `states[k]` holds on `[times[k], times[k+1])`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<S> {
    pub times: Vec<S>,
    pub states: Vec<StatePoint<S>>,
    pub horizon: S,
    pub kind: TrajectoryKind,
}

impl<S: Scalar> Trajectory<S> {
    pub fn jumps(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    fn index_at(&self, t: S) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    /// `X_t` (right-continuous).
    pub fn state_at(&self, t: S) -> &StatePoint<S> {
        &self.states[self.index_at(t)]
    }

    /// `X_{t-}`; equals `X_0` at `t = 0`.
    pub fn left_limit(&self, t: S) -> &StatePoint<S> {
        let k = self.times.partition_point(|&s| s < t).saturating_sub(1);
        &self.states[k]
    }

    /// Constant pieces clipped to `[0, horizon]` as `(start, end, state)`.
    pub fn segments(&self) -> impl Iterator<Item = (S, S, &StatePoint<S>)> + '_ {
        (0..self.states.len()).map(move |k| {
            let end = self.times.get(k + 1).copied().unwrap_or(self.horizon);
            (self.times[k], end, &self.states[k])
        })
    }
}

fn draw_initial<S: Scalar>(p: &ProcessLaw<S>, rng: &mut ChaCha8Rng) -> StatePoint<S> {
    match &p.initial {
        Initial::Point(x) => x.clone(),
        Initial::Distribution(probs) => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, w) in probs.iter().enumerate() {
                acc += w.to_f64_lossy();
                if u < acc {
                    return StatePoint::Label(i);
                }
            }
            StatePoint::Label(probs.iter().rposition(|w| !w.is_zero()).unwrap_or(0))
        }
    }
}

/// Outgoing `(rate, target)` pairs at `x`, zero rates dropped.
fn moves<S: Scalar>(p: &ProcessLaw<S>, x: &StatePoint<S>) -> Result<Vec<(f64, StatePoint<S>)>> {
    match &p.generator.kind {
        GeneratorKind::RateMatrix { q } => {
            let a = x
                .label()
                .ok_or_else(|| DualityError::Domain("rate matrix at a real point".into()))?;
            Ok(q[a]
                .iter()
                .enumerate()
                .filter(|&(b, v)| b != a && *v > S::zero())
                .map(|(b, v)| (v.to_f64_lossy(), StatePoint::Label(b)))
                .collect())
        }
        GeneratorKind::PureJump { channels } => {
            let c = x.coords();
            let env = Env::single(&c);
            let mut out = Vec::with_capacity(channels.len());
            for ch in channels {
                let rate = ch.rate.eval(&env)?;
                if rate < S::zero() {
                    return Err(DualityError::Eval(format!("negative jump rate {rate}")));
                }
                if rate > S::zero() {
                    out.push((rate.to_f64_lossy(), jump_target(&p.generator.space, ch, &env)?));
                }
            }
            Ok(out)
        }
        GeneratorKind::Flow { .. } => Err(DualityError::Unsupported(
            "flows are not sampled as jump processes".into(),
        )),
    }
}

/// Jump-chain construction on `[0, horizon]`.
pub fn sample_path<S: Scalar>(p: &ProcessLaw<S>, horizon: S, stream: StreamId) -> Result<Trajectory<S>> {
    let Solver::Gillespie { jump_cap } = p.solver else {
        return Err(DualityError::Unsupported("sample_path needs the Gillespie sampler".into()));
    };
    let mut rng = stream.rng();
    let mut x = draw_initial(p, &mut rng);
    let mut times = vec![S::zero()];
    let mut states = vec![x.clone()];
    let end = horizon.to_f64_lossy();
    let mut t = 0.0f64;
    loop {
        let out = moves(p, &x)?;
        let total: f64 = out.iter().map(|m| m.0).sum();
        if total <= 0.0 {
            break;
        }
        let hold: f64 = rng.sample(Exp1);
        t += hold / total;
        if t > end {
            break;
        }
        if times.len() > jump_cap {
            return Err(DualityError::Explosion { cap: jump_cap, time: t });
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = out.len() - 1;
        for (k, m) in out.iter().enumerate() {
            if u < m.0 {
                pick = k;
                break;
            }
            u -= m.0;
        }
        x = out[pick].1.clone();
        times.push(S::lit(t));
        states.push(x.clone());
    }
    Ok(Trajectory {
        times,
        states,
        horizon,
        kind: TrajectoryKind::Sampled {
            seed: stream.seed,
            replica: stream.replica,
        },
    })
}

fn fmt_state<S: Scalar>(x: &StatePoint<S>) -> String {
    match x {
        StatePoint::Label(i) => i.to_string(),
        StatePoint::Real(v) => v
            .iter()
            .map(|c| format!("{:.16e}", c.to_f64_lossy()))
            .collect::<Vec<_>>()
            .join(","),
    }
}

/// Appends one whitespace-separated line `replica time from to` per jump.
pub fn write_jump_dump<S: Scalar, W: Write>(out: &mut W, replica: u64, path: &Trajectory<S>) -> Result<()> {
    for k in 1..path.states.len() {
        writeln!(
            out,
            "{replica} {:.16e} {} {}",
            path.times[k].to_f64_lossy(),
            fmt_state(&path.states[k - 1]),
            fmt_state(&path.states[k])
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{Generator, JumpChannel};
    use crate::expr::parse_expr;
    use crate::space::StateSpace;

    fn chain(q: Vec<Vec<f64>>, start: usize) -> ProcessLaw<f64> {
        ProcessLaw::new(
            Generator::rate_matrix(q),
            Initial::Point(StatePoint::Label(start)),
            Solver::gillespie(),
        )
    }

    #[test]
    fn zero_rates_give_constant_path() {
        let p = ProcessLaw::new(
            Generator::pure_jump(
                StateSpace::finite_n(3),
                vec![JumpChannel { rate: parse_expr("0").unwrap(), target: vec![parse_expr("x + 1").unwrap()] }],
            ),
            Initial::Point(StatePoint::Label(1)),
            Solver::gillespie(),
        );
        let path = sample_path(&p, 5.0, StreamId::new(7, 1, 0)).unwrap();
        assert_eq!(path.jumps(), 0);
        assert_eq!(path.state_at(5.0), &StatePoint::Label(1));
    }

    #[test]
    fn hitting_fraction_matches_exponential_law() {
        let p = chain(vec![vec![-1.0, 1.0], vec![0.0, 0.0]], 0);
        let n = 100_000;
        let hits = (0..n)
            .filter(|&i| {
                let path = sample_path(&p, 1.0, StreamId::new(11, 1, i)).unwrap();
                path.state_at(1.0) == &StatePoint::Label(1)
            })
            .count();
        let target = 1.0 - (-1.0f64).exp();
        let sigma = (target * (1.0 - target) / n as f64).sqrt();
        assert!(((hits as f64 / n as f64) - target).abs() < 3.0 * sigma);
    }

    #[test]
    fn cadlag_structure() {
        let p = chain(vec![vec![-3.0, 3.0], vec![2.0, -2.0]], 0);
        let path = sample_path(&p, 4.0, StreamId::new(3, 2, 5)).unwrap();
        assert!(path.jumps() > 0);
        for k in 1..path.times.len() {
            let t = path.times[k];
            assert!(t > path.times[k - 1]);
            assert_eq!(path.state_at(t), &path.states[k]);
            assert_eq!(path.left_limit(t), &path.states[k - 1]);
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let p = chain(vec![vec![-1.0, 1.0], vec![1.0, -1.0]], 0);
        let a = sample_path(&p, 10.0, StreamId::new(1, 1, 0)).unwrap();
        let b = sample_path(&p, 10.0, StreamId::new(1, 1, 0)).unwrap();
        let c = sample_path(&p, 10.0, StreamId::new(1, 2, 0)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.times, c.times);
    }

    #[test]
    fn explosion_is_reported() {
        let mut p = chain(vec![vec![-1e6, 1e6], vec![1e6, -1e6]], 0);
        p.solver = Solver::Gillespie { jump_cap: 100 };
        assert!(matches!(
            sample_path(&p, 1.0, StreamId::new(0, 1, 0)),
            Err(DualityError::Explosion { cap: 100, .. })
        ));
    }

    #[test]
    fn dump_format() {
        let p = chain(vec![vec![-1.0, 1.0], vec![0.0, 0.0]], 0);
        let path = sample_path(&p, 50.0, StreamId::new(2, 1, 9)).unwrap();
        let mut buf = Vec::new();
        write_jump_dump(&mut buf, 9, &path).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let fields: Vec<&str> = text.split_whitespace().collect();
        assert_eq!(fields.len(), 4);
        assert_eq!((fields[0], fields[2], fields[3]), ("9", "0", "1"));
    }
}
