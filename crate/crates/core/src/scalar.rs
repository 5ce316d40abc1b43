//! Floating-point abstraction shared by every numerical module.
//!
//! All likelihood, accounting and re-weighting code is written against
//! [`Scalar`] so it runs in `f32` or `f64`. Random variate generation is
//! routed through the trait because `rand_distr` is generic over its own
//! float bounds, which do not compose well as supertraits.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal. Panics only if the value is not
    /// representable, which cannot happen for `f32`/`f64`.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_count(x: u64) -> Self {
        Self::from_u64(x).expect("count representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Uniform on `[0, 1)`.
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Gamma variate with the given shape and scale; both must be positive.
    fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: Self, scale: Self) -> Self;

    /// Poisson count with mean `lambda`. A non-positive mean yields 0.
    fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, lambda: Self) -> u64;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            #[inline]
            fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.random::<$t>()
            }

            fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: Self, scale: Self) -> Self {
                Gamma::new(shape, scale)
                    .expect("gamma parameters must be positive and finite")
                    .sample(rng)
            }

            fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, lambda: Self) -> u64 {
                if !(lambda > 0.0) {
                    return 0;
                }
                let draw: $t = Poisson::new(lambda)
                    .expect("poisson mean must be finite")
                    .sample(rng);
                draw as u64
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);
