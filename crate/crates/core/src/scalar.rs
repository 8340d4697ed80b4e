//! Floating point abstraction shared by every numeric kernel.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumCast};

/// Floating point scalar: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumCast + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(value: f64) -> Self {
        <Self as FromPrimitive>::from_f64(value).expect("f64 literal representable")
    }

    /// Conversion from a count.
    #[inline]
    fn from_count(value: usize) -> Self {
        <Self as FromPrimitive>::from_usize(value).expect("count representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Mean and population variance of a sequence.
///
/// Values are shifted by the first element before accumulation, so a
/// constant sequence yields exactly its value and exactly zero variance.
pub fn mean_and_variance<T: Scalar>(values: impl IntoIterator<Item = T>) -> Option<(T, T)> {
    let mut iter = values.into_iter();
    let shift = iter.next()?;
    let mut n = 1usize;
    let mut sum = T::zero();
    let mut sum_sq = T::zero();
    for v in iter {
        let d = v - shift;
        sum = sum + d;
        sum_sq = sum_sq + d * d;
        n += 1;
    }
    let count = T::from_count(n);
    let mean_shifted = sum / count;
    let var = (sum_sq / count - mean_shifted * mean_shifted).max(T::zero());
    Some((shift + mean_shifted, var))
}

/// Percentile of already sorted values by linear interpolation between
/// closest ranks (`rank = p * (n - 1)`).
pub fn percentile_sorted<T: Scalar>(sorted: &[T], p: T) -> Option<T> {
    if sorted.is_empty() {
        return None;
    }
    let last = sorted.len() - 1;
    let rank = p.max(T::zero()).min(T::one()) * T::from_count(last);
    let lo = rank.floor();
    let lo_idx = <usize as NumCast>::from(lo).unwrap_or(0).min(last);
    let hi_idx = (lo_idx + 1).min(last);
    let frac = rank - lo;
    Some(sorted[lo_idx] + (sorted[hi_idx] - sorted[lo_idx]) * frac)
}
