//! Scalar abstraction shared by the dense tensor, SVD and TT code paths.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real floating-point scalar usable by every numeric routine in the crate.
///
/// Blanket-implemented, so `f32` and `f64` both qualify.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// Conversion helper for literals.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + Default
        + Debug
        + Display
        + Sum
        + Send
        + Sync
        + 'static
{
}
