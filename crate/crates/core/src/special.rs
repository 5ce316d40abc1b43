//! Special functions needed by the count likelihoods.

use crate::scalar::Scalar;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for positive arguments.
///
/// Lanczos approximation below 10, Stirling series with four correction
/// terms above. Returns NaN for non-positive or NaN input.
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    if !(x > T::zero()) {
        return T::nan();
    }
    if x.is_infinite() {
        return x;
    }
    let half = T::lit(0.5);
    let ln_sqrt_2pi = T::lit(0.918_938_533_204_672_8);
    if x >= T::lit(10.0) {
        let inv = x.recip();
        let inv2 = inv * inv;
        let series = inv
            * (T::lit(1.0 / 12.0)
                - inv2
                    * (T::lit(1.0 / 360.0)
                        - inv2 * (T::lit(1.0 / 1260.0) - inv2 * T::lit(1.0 / 1680.0))));
        return (x - half) * x.ln() - x + ln_sqrt_2pi + series;
    }
    if x < half {
        // reflection
        let pi = T::lit(std::f64::consts::PI);
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let z = x - T::one();
    let mut acc = T::lit(LANCZOS_COEF[0]);
    for (k, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += T::lit(c) / (z + T::from_usize(k).unwrap());
    }
    let t = z + T::lit(LANCZOS_G) + half;
    ln_sqrt_2pi + (z + half) * t.ln() - t + acc.ln()
}

/// `ln(Σ exp(v))` without overflow. Empty input gives `-inf`.
pub fn log_sum_exp<T: Scalar>(values: &[T]) -> T {
    let max = values.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() || !max.is_finite() {
        return max;
    }
    let sum: T = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}
