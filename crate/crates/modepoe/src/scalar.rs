//! Floating-point scalar abstraction.
//!
//! All numeric code in this crate is generic over [`Scalar`] so the same
//! pipeline runs in `f32` or `f64`. The crate root exports `f64` aliases for
//! the common types.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Scalar type the pipeline computes in: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Shorthand for converting an `f64` constant.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Euclidean norm.
pub fn l2_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// Euclidean distance between equal-length vectors.
pub fn l2_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt()
}

/// Arithmetic mean; zero for an empty slice.
pub fn mean<T: Scalar>(v: &[T]) -> T {
    if v.is_empty() {
        return T::zero();
    }
    v.iter().copied().sum::<T>() / T::of(v.len() as f64)
}

/// Numerically stable log-sum-exp.
pub fn log_sum_exp<T: Scalar>(v: &[T]) -> T {
    let m = v.iter().copied().fold(T::neg_infinity(), T::max);
    if m == T::neg_infinity() {
        return T::neg_infinity();
    }
    let s = v.iter().map(|&x| (x - m).exp()).sum::<T>();
    m + s.ln()
}
