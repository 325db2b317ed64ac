use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar accepted by the numeric analyses.
pub trait Scalar: Float + FromPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static {
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(Self::nan)
    }

    fn lit(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }
}

impl<T> Scalar for T where T: Float + FromPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static {}

/// Cosine of the angle between two equal-length vectors. Returns `None` for
/// mismatched lengths or a zero vector.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> Option<T> {
    if a.len() != b.len() || a.is_empty() {
        return None;
    }
    let dot: T = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
    let na: T = a.iter().map(|&x| x * x).sum::<T>().sqrt();
    let nb: T = b.iter().map(|&x| x * x).sum::<T>().sqrt();
    if na == T::zero() || nb == T::zero() {
        return None;
    }
    let c = dot / (na * nb);
    Some(c.max(-T::one()).min(T::one()))
}
