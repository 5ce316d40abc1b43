//! Small descriptive-statistics helpers.

use crate::scalar::Scalar;

/// Sample quantile by linear interpolation between order statistics
/// (R's type 7): position `p·(N − 1)` in the sorted sample.
///
/// `sorted` must be ascending and non-empty; `p` is clamped to `[0, 1]`.
pub fn quantile_sorted<T: Scalar>(sorted: &[T], p: T) -> T {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let p = p.max(T::zero()).min(T::one());
    let last = sorted.len() - 1;
    let pos = p * T::from_usize(last).unwrap();
    let lo = pos.floor().to_usize().unwrap_or(0).min(last);
    if lo == last {
        return sorted[last];
    }
    let frac = pos - T::from_usize(lo).unwrap();
    if frac == T::zero() {
        return sorted[lo];
    }
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Type-7 quantile of an unsorted sample.
pub fn quantile<T: Scalar>(values: &[T], p: T) -> T {
    let mut v = values.to_vec();
    sort_floats(&mut v);
    quantile_sorted(&v, p)
}

pub fn sort_floats<T: Scalar>(v: &mut [T]) {
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN in sample"));
}

pub fn mean<T: Scalar>(values: &[T]) -> T {
    values.iter().copied().sum::<T>() / T::from_usize(values.len()).unwrap()
}

/// Sample standard deviation (n − 1 denominator); zero for one value.
pub fn std_dev<T: Scalar>(values: &[T]) -> T {
    if values.len() < 2 {
        return T::zero();
    }
    let m = mean(values);
    let ss: T = values.iter().map(|&v| (v - m) * (v - m)).sum();
    (ss / T::from_usize(values.len() - 1).unwrap()).sqrt()
}

/// Coefficient of variation, `sd / mean`. Zero mean gives zero.
pub fn coefficient_of_variation<T: Scalar>(values: &[T]) -> T {
    let m = mean(values);
    if m == T::zero() {
        return T::zero();
    }
    std_dev(values) / m.abs()
}

/// Exactly rounded floating-point sum (Shewchuk's partials, as in Python's
/// `math.fsum`). Used where a difference of two long sums must not lose
/// the small term that separates them.
#[derive(Debug, Clone, Default)]
pub struct ExactSum<T> {
    partials: Vec<T>,
}

impl<T: Scalar> ExactSum<T> {
    pub fn new() -> Self {
        ExactSum {
            partials: Vec::new(),
        }
    }

    pub fn add(&mut self, mut x: T) {
        let mut kept = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != T::zero() {
                self.partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        self.partials.truncate(kept);
        self.partials.push(x);
    }

    /// Adds every partial of `other`, optionally negated.
    pub fn absorb(&mut self, other: &ExactSum<T>, negate: bool) {
        for &p in &other.partials {
            self.add(if negate { -p } else { p });
        }
    }

    pub fn value(&self) -> T {
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return T::zero();
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = T::zero();
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != T::zero() {
                break;
            }
        }
        // round-half-even correction when the tail sits exactly on a tie
        if n > 0
            && ((lo < T::zero() && p[n - 1] < T::zero())
                || (lo > T::zero() && p[n - 1] > T::zero()))
        {
            let y = lo + lo;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn type7_small_vectors() {
        let v = [1.0f64, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        // pos = 0.15 * 3 = 0.45
        assert!((quantile_sorted(&v, 0.15) - 1.45).abs() < 1e-15);
        // pos = 0.9 * 3 = 2.7
        assert!((quantile_sorted(&v, 0.9) - 3.7).abs() < 1e-15);
        assert_eq!(quantile(&[5.0, 1.0, 3.0], 0.5), 3.0);
        assert_eq!(quantile(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn exact_sum_recovers_small_terms() {
        let mut s = ExactSum::new();
        for x in [1e16, 1.0, -1e16] {
            s.add(x);
        }
        assert_eq!(s.value(), 1.0);
        let mut s = ExactSum::new();
        for _ in 0..10 {
            s.add(0.1);
        }
        assert_eq!(s.value(), 1.0);
    }

    #[test]
    fn cv_and_sd() {
        assert_eq!(std_dev(&[2.0]), 0.0);
        assert!((std_dev(&[1.0, 3.0]) - 2f64.sqrt()).abs() < 1e-15);
        assert!((coefficient_of_variation(&[1.0, 3.0]) - 2f64.sqrt() / 2.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn exact_sum_difference_isolates_term(
            terms in proptest::collection::vec(-1e3f64..1e3, 2..40),
            idx in 0usize..40,
        ) {
            let i = idx % terms.len();
            let mut full = ExactSum::new();
            let mut rest = ExactSum::new();
            for (j, &t) in terms.iter().enumerate() {
                full.add(t);
                if j != i {
                    rest.add(t);
                }
            }
            let mut diff = full.clone();
            diff.absorb(&rest, true);
            prop_assert_eq!(diff.value(), terms[i]);
        }
    }
}
