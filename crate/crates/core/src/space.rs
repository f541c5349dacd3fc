//! State spaces and points.

use std::ops::Deref;

use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub enum StateSpace<S> {
    /// Finitely many labelled states; a state is identified with its index.
    FiniteSet { labels: Vec<String> },
    /// Axis-aligned box, possibly unbounded, with per-face open/closed flags.
    RealBox {
        lower: Vec<S>,
        upper: Vec<S>,
        lower_open: Vec<bool>,
        upper_open: Vec<bool>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum StatePoint<S> {
    Label(usize),
    Real(Vec<S>),
}

/// Coordinates of a point as a slice; labels read as their index.
pub enum Coords<'a, S> {
    Label([S; 1]),
    Real(&'a [S]),
}

impl<S> Deref for Coords<'_, S> {
    type Target = [S];
    fn deref(&self) -> &[S] {
        match self {
            Coords::Label(a) => a,
            Coords::Real(v) => v,
        }
    }
}

impl<S: Scalar> StatePoint<S> {
    pub fn real1(x: S) -> Self {
        StatePoint::Real(vec![x])
    }

    pub fn coords(&self) -> Coords<'_, S> {
        match self {
            StatePoint::Label(i) => Coords::Label([S::from_usize_lossy(*i)]),
            StatePoint::Real(v) => Coords::Real(v),
        }
    }

    pub fn label(&self) -> Option<usize> {
        match self {
            StatePoint::Label(i) => Some(*i),
            StatePoint::Real(_) => None,
        }
    }
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Van der Corput radical inverse of `index` in base `base`; lies in (0, 1) for index ≥ 1.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    out
}

/// Halton coordinate `dim` of point `index` (1-based indices avoid the origin).
pub fn halton(index: u64, dim: usize) -> f64 {
    radical_inverse(index, PRIMES[dim % PRIMES.len()])
}

impl<S: Scalar> StateSpace<S> {
    pub fn finite<I: IntoIterator<Item = T>, T: Into<String>>(labels: I) -> Self {
        StateSpace::FiniteSet {
            labels: labels.into_iter().map(Into::into).collect(),
        }
    }

    /// Labels `0..n`.
    pub fn finite_n(n: usize) -> Self {
        StateSpace::finite((0..n).map(|i| i.to_string()))
    }

    /// The open half line `(0, ∞)`.
    pub fn positive_half_line() -> Self {
        StateSpace::RealBox {
            lower: vec![S::zero()],
            upper: vec![S::infinity()],
            lower_open: vec![true],
            upper_open: vec![true],
        }
    }

    pub fn closed_box(lower: Vec<S>, upper: Vec<S>) -> Self {
        let d = lower.len();
        StateSpace::RealBox {
            lower,
            upper,
            lower_open: vec![false; d],
            upper_open: vec![false; d],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            StateSpace::FiniteSet { .. } => 1,
            StateSpace::RealBox { lower, .. } => lower.len(),
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, StateSpace::FiniteSet { .. })
    }

    /// Number of states of a finite space.
    pub fn cardinality(&self) -> Option<usize> {
        match self {
            StateSpace::FiniteSet { labels } => Some(labels.len()),
            StateSpace::RealBox { .. } => None,
        }
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        match self {
            StateSpace::FiniteSet { labels } => labels.iter().position(|l| l == label),
            StateSpace::RealBox { .. } => None,
        }
    }

    /// Checks the structural invariants; returns a description of the first problem.
    pub fn check(&self) -> Result<(), String> {
        match self {
            StateSpace::FiniteSet { labels } => {
                if labels.is_empty() {
                    return Err("finite state space has no labels".into());
                }
                for (i, l) in labels.iter().enumerate() {
                    if labels[..i].contains(l) {
                        return Err(format!("duplicate label '{l}'"));
                    }
                }
                Ok(())
            }
            StateSpace::RealBox {
                lower,
                upper,
                lower_open,
                upper_open,
            } => {
                let d = lower.len();
                if d == 0 {
                    return Err("box has dimension 0".into());
                }
                if upper.len() != d || lower_open.len() != d || upper_open.len() != d {
                    return Err("box bound vectors have inconsistent lengths".into());
                }
                for i in 0..d {
                    if lower[i].is_nan() || upper[i].is_nan() || !(lower[i] < upper[i]) {
                        return Err(format!("box face {i}: lower bound must be below upper"));
                    }
                    if (lower[i].is_infinite() && !lower_open[i])
                        || (upper[i].is_infinite() && !upper_open[i])
                    {
                        return Err(format!("box face {i}: infinite faces must be open"));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn contains(&self, point: &StatePoint<S>) -> bool {
        match (self, point) {
            (StateSpace::FiniteSet { labels }, StatePoint::Label(i)) => *i < labels.len(),
            (
                StateSpace::RealBox {
                    lower,
                    upper,
                    lower_open,
                    upper_open,
                },
                StatePoint::Real(x),
            ) => {
                x.len() == lower.len()
                    && x.iter().enumerate().all(|(i, &v)| {
                        v.is_finite()
                            && if lower_open[i] { v > lower[i] } else { v >= lower[i] }
                            && if upper_open[i] { v < upper[i] } else { v <= upper[i] }
                    })
            }
            _ => false,
        }
    }

    /// Coordinates whose lower bound is at least zero.
    pub fn nonnegative_coords(&self) -> Vec<usize> {
        match self {
            StateSpace::FiniteSet { .. } => vec![0],
            StateSpace::RealBox { lower, .. } => (0..lower.len())
                .filter(|&i| lower[i] >= S::zero())
                .collect(),
        }
    }

    /// All states of a finite space, in label order.
    pub fn enumerate(&self) -> Option<Vec<StatePoint<S>>> {
        self.cardinality()
            .map(|n| (0..n).map(StatePoint::Label).collect())
    }

    /// Deterministic low-discrepancy point number `index` (≥ 1), using Halton
    /// dimensions starting at `dim_offset`. Unbounded faces are reached through
    /// `u / (1 - u)` style maps, so every point is interior.
    pub fn quasi_random_point(&self, index: u64, dim_offset: usize) -> StatePoint<S> {
        match self {
            StateSpace::FiniteSet { labels } => {
                let u = halton(index, dim_offset);
                StatePoint::Label(((u * labels.len() as f64) as usize).min(labels.len() - 1))
            }
            StateSpace::RealBox { lower, upper, .. } => {
                let coords = (0..lower.len())
                    .map(|i| {
                        let u = halton(index, dim_offset + i);
                        let (a, b) = (lower[i].to_f64_lossy(), upper[i].to_f64_lossy());
                        let v = match (a.is_finite(), b.is_finite()) {
                            (true, true) => a + u * (b - a),
                            (true, false) => a + u / (1.0 - u),
                            (false, true) => b - (1.0 - u) / u,
                            (false, false) => (std::f64::consts::PI * (u - 0.5)).tan(),
                        };
                        S::lit(v)
                    })
                    .collect();
                StatePoint::Real(coords)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_line_is_open_at_zero() {
        let s: StateSpace<f64> = StateSpace::positive_half_line();
        assert!(s.check().is_ok());
        assert!(!s.contains(&StatePoint::real1(0.0)));
        assert!(s.contains(&StatePoint::real1(1e-300)));
        assert!(!s.contains(&StatePoint::real1(f64::INFINITY)));
        assert!(!s.contains(&StatePoint::Label(0)));
    }

    #[test]
    fn invariants_are_checked() {
        assert!(StateSpace::<f64>::finite(Vec::<String>::new()).check().is_err());
        assert!(StateSpace::<f64>::finite(["a", "a"]).check().is_err());
        assert!(StateSpace::closed_box(vec![1.0], vec![1.0]).check().is_err());
        assert!(StateSpace::closed_box(vec![0.0, 0.0], vec![1.0]).check().is_err());
    }

    #[test]
    fn quasi_random_points_are_members() {
        let spaces: Vec<StateSpace<f64>> = vec![
            StateSpace::positive_half_line(),
            StateSpace::closed_box(vec![-1.0, 2.0], vec![1.0, 3.0]),
            StateSpace::RealBox {
                lower: vec![f64::NEG_INFINITY],
                upper: vec![f64::INFINITY],
                lower_open: vec![true],
                upper_open: vec![true],
            },
            StateSpace::finite_n(3),
        ];
        for s in &spaces {
            for i in 1..2000 {
                assert!(s.contains(&s.quasi_random_point(i, 0)));
            }
        }
    }

    #[test]
    fn halton_is_low_discrepancy() {
        let n = 4096;
        let mean: f64 = (1..=n).map(|i| halton(i, 1)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 1e-3);
    }
}
