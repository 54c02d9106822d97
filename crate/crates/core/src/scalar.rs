//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! Algorithms are written once against [`Real`] and instantiated for `f64`
//! (the default used by the harness), `f32`, or the operation-counting
//! [`Counted`](crate::algorithms::complexity::Counted) type.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Real field used by the estimation, analysis and bound routines.
pub trait Real:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn two() -> Self {
        Self::one() + Self::one()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Inner product of two equal-length slices.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut it = a.iter().zip(b);
    match it.next() {
        None => T::zero(),
        Some((x, y)) => it.fold(*x * *y, |acc, (x, y)| acc + *x * *y),
    }
}

#[inline]
pub fn norm_sq<T: Real>(a: &[T]) -> T {
    dot(a, a)
}

/// Squared Euclidean distance between two vectors.
#[inline]
pub fn dist_sq<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(x, y)| (*x - *y) * (*x - *y))
        .fold(T::zero(), |acc, v| acc + v)
}

/// `10 log10(x)`, the decibel form used for all squared-error quantities.
#[inline]
pub fn db<T: Real>(x: T) -> T {
    T::lit(10.0) * x.log10()
}
