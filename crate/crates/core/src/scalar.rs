//! Scalar abstraction: the numeric element type of every array and graph.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type accepted by the toolkit (f32 or f64).
///
/// The shipped pipeline instantiates everything at `f64` (see the aliases at
/// the crate root); `f32` is available for callers that want the smaller
/// footprint and can tolerate noisier gradients.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum<Self> + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` constant.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant")
    }

    /// Conversion from a count or index.
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize fits in scalar")
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + Sum<Self>
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}
