//! Floating-point abstraction: every numerical module is generic over
//! [`Scalar`], which is implemented for `f32` and `f64`.

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::fmt::LowerExp
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, for constants and RNG output.
    fn cast(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to any Scalar")
    }

    /// Conversion back to `f64` for reporting and formatted output.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    fn from_index(v: usize) -> Self {
        Self::from_usize(v).expect("index fits in Scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
