//! Composite Simpson rules.

use crate::error::Result;
use crate::scalar::Scalar;
use crate::summation::pairwise_sum;

/// Smallest even interval count with spacing at most `step` on `[a, b]`.
pub fn even_intervals<S: Scalar>(a: S, b: S, step: S) -> usize {
    let n = ((b - a) / step).ceil().to_usize().unwrap_or(2).max(2);
    n + (n % 2)
}

/// Simpson weights for `n` (even) intervals of width `h`.
pub fn simpson_weights<S: Scalar>(n: usize, h: S) -> Vec<S> {
    debug_assert!(n % 2 == 0 && n >= 2);
    let third = h / S::lit(3.0);
    (0..=n)
        .map(|i| {
            if i == 0 || i == n {
                third
            } else if i % 2 == 1 {
                S::lit(4.0) * third
            } else {
                S::lit(2.0) * third
            }
        })
        .collect()
}

/// Simpson sum over equally spaced samples (odd count). A single sample
/// integrates to zero, two samples fall back to the trapezoid rule.
pub fn simpson_samples<S: Scalar>(values: &[S], h: S) -> S {
    match values.len() {
        0 | 1 => S::zero(),
        2 => (values[0] + values[1]) * h / S::lit(2.0),
        n => {
            assert!(n % 2 == 1, "Simpson needs an even number of intervals");
            let w = simpson_weights(n - 1, h);
            let terms: Vec<S> = values.iter().zip(&w).map(|(&v, &w)| v * w).collect();
            pairwise_sum(&terms)
        }
    }
}

/// Simpson estimates at spacing `≤ step` and at half that spacing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Refined<S> {
    pub coarse: S,
    pub fine: S,
    /// Interval count of the coarse rule.
    pub intervals: usize,
}

impl<S: Scalar> Refined<S> {
    pub fn discrepancy(&self) -> S {
        (self.fine - self.coarse).abs()
    }
}

/// Integrates `f` over `[a, b]` by composite Simpson at two resolutions. The
/// fine rule reuses the coarse nodes, so `f` is called `2n + 1` times.
pub fn simpson_refined<S: Scalar>(
    a: S,
    b: S,
    step: S,
    mut f: impl FnMut(S) -> Result<S>,
) -> Result<Refined<S>> {
    if b <= a {
        return Ok(Refined {
            coarse: S::zero(),
            fine: S::zero(),
            intervals: 0,
        });
    }
    let n = even_intervals(a, b, step);
    let fine_n = 2 * n;
    let h = (b - a) / S::from_usize_lossy(fine_n);
    let mut values = Vec::with_capacity(fine_n + 1);
    for i in 0..=fine_n {
        let x = if i == fine_n {
            b
        } else {
            a + S::from_usize_lossy(i) * h
        };
        values.push(f(x)?);
    }
    let coarse_values: Vec<S> = values.iter().step_by(2).copied().collect();
    Ok(Refined {
        coarse: simpson_samples(&coarse_values, h + h),
        fine: simpson_samples(&values, h),
        intervals: n,
    })
}

/// Simpson rule on arbitrary (strictly increasing) abscissae: piecewise
/// quadratic interpolation over interval pairs, with the last interval of an
/// odd count integrated from the final three nodes.
pub fn simpson_nonuniform<S: Scalar>(xs: &[S], ys: &[S]) -> S {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len().saturating_sub(1);
    if n == 0 {
        return S::zero();
    }
    let two = S::lit(2.0);
    let six = S::lit(6.0);
    if n == 1 {
        return (xs[1] - xs[0]) * (ys[0] + ys[1]) / two;
    }
    let mut parts = Vec::with_capacity(n / 2 + 1);
    let mut i = 0;
    while i + 2 <= n {
        let h0 = xs[i + 1] - xs[i];
        let h1 = xs[i + 2] - xs[i + 1];
        let s = h0 + h1;
        parts.push(
            s / six
                * ((two - h1 / h0) * ys[i]
                    + s * s / (h0 * h1) * ys[i + 1]
                    + (two - h0 / h1) * ys[i + 2]),
        );
        i += 2;
    }
    if n % 2 == 1 {
        let h0 = xs[n - 1] - xs[n - 2];
        let h1 = xs[n] - xs[n - 1];
        let three = S::lit(3.0);
        parts.push(
            ys[n] * (two * h1 * h1 + three * h0 * h1) / (six * (h0 + h1))
                + ys[n - 1] * (h1 * h1 + three * h1 * h0) / (six * h0)
                - ys[n - 2] * h1 * h1 * h1 / (six * h0 * (h0 + h1)),
        );
    }
    pairwise_sum(&parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_cubics() {
        let r = simpson_refined(0.0, 2.0, 0.5, |x: f64| Ok(x * x * x - x + 1.0)).unwrap();
        assert!((r.coarse - 4.0).abs() < 1e-13);
        assert!((r.fine - 4.0).abs() < 1e-13);
    }

    #[test]
    fn fourth_order_convergence() {
        let exact = 1.0f64.exp() - 1.0;
        let e1 = (simpson_refined(0.0, 1.0, 0.1, |x: f64| Ok(x.exp())).unwrap().coarse - exact).abs();
        let e2 = (simpson_refined(0.0, 1.0, 0.05, |x: f64| Ok(x.exp())).unwrap().coarse - exact).abs();
        assert!(e1 / e2 > 15.0 && e1 / e2 < 17.0);
    }

    #[test]
    fn nonuniform_matches_uniform_and_is_exact_for_quadratics() {
        let xs = [0.0, 0.1, 0.35, 0.5, 0.9, 1.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x * x - 2.0 * x + 0.5).collect();
        assert!((simpson_nonuniform(&xs, &ys) - 0.5).abs() < 1e-14);
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 0.2).collect();
        let vals: Vec<f64> = grid.iter().map(|x| x.sin()).collect();
        let a = simpson_nonuniform(&grid, &vals);
        let b = simpson_samples(&vals, 0.2);
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn single_precision_rule() {
        let r = simpson_refined(0.0f32, 1.0, 0.1, |x| Ok(x * x)).unwrap();
        assert!((r.fine - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn degenerate_ranges() {
        assert_eq!(simpson_refined(1.0, 1.0, 0.1, |_| Ok(1.0f64)).unwrap().fine, 0.0);
        assert_eq!(simpson_nonuniform::<f64>(&[0.0], &[3.0]), 0.0);
        assert_eq!(simpson_nonuniform(&[0.0, 2.0], &[1.0, 3.0]), 4.0);
    }
}
