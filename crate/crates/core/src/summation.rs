//! Order-fixed reductions.
//!
//! Replica results are always reduced with the same pairwise tree regardless
//! of how many worker threads produced them, so reported digits do not depend
//! on the thread count.

use crate::scalar::Scalar;

const BLOCK: usize = 16;

/// Pairwise (cascade) summation with a fixed split point per length.
pub fn pairwise_sum<S: Scalar>(values: &[S]) -> S {
    if values.len() <= BLOCK {
        return values.iter().fold(S::zero(), |acc, &v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pairwise sum of `f(item)`; `f` is evaluated once per element in order.
pub fn pairwise_sum_by<T, S: Scalar>(items: &[T], f: impl Fn(&T) -> S + Copy) -> S {
    if items.len() <= BLOCK {
        return items.iter().fold(S::zero(), |acc, v| acc + f(v));
    }
    let mid = items.len() / 2;
    pairwise_sum_by(&items[..mid], f) + pairwise_sum_by(&items[mid..], f)
}

pub fn mean<S: Scalar>(values: &[S]) -> S {
    if values.is_empty() {
        return S::zero();
    }
    pairwise_sum(values) / S::from_usize_lossy(values.len())
}

/// Unbiased sample variance with a two-pass pairwise reduction.
pub fn variance<S: Scalar>(values: &[S]) -> S {
    let n = values.len();
    if n < 2 {
        return S::zero();
    }
    let m = mean(values);
    pairwise_sum_by(values, |&v| (v - m) * (v - m)) / S::from_usize_lossy(n - 1)
}
