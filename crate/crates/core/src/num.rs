use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar used throughout the crate (`f32` or `f64`).
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Complementary error function.
    fn erfc(self) -> Self;

    /// Converts an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }
}

impl Real for f64 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}

impl Real for f32 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
}

/// Squared Euclidean norm.
pub(crate) fn norm_sq<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc + x * x)
}

pub(crate) fn norm<T: Real>(v: &[T]) -> T {
    norm_sq(v).sqrt()
}

pub(crate) fn dist_sq<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| {
        let d = x - y;
        acc + d * d
    })
}

/// In-place log-sum-exp normalization: turns log-weights into probabilities.
/// Returns the log normalizer.
pub(crate) fn softmax_in_place<T: Real>(logits: &mut [T]) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        let u = T::one() / T::of_usize(logits.len());
        logits.iter_mut().for_each(|l| *l = u);
        return max;
    }
    let mut total = T::zero();
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        total = total + *l;
    }
    for l in logits.iter_mut() {
        *l = *l / total;
    }
    max + total.ln()
}
