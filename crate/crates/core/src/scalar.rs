//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! Training runs in `f32`; gradient checks, SVD round trips and anything with
//! a tight tolerance run in `f64`. Both go through the same code paths.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::FftNum;

/// Floating-point element type accepted by tensors, matrices and signals.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + FftNum + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable in scalar type")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon scaled into a "numerically zero" threshold.
    fn tiny() -> Self;

    /// Little-endian serialization as `f32`, the on-disk payload type.
    #[inline]
    fn to_f32_le(self) -> [u8; 4] {
        (self.f64() as f32).to_le_bytes()
    }
}

impl Scalar for f32 {
    fn tiny() -> Self {
        1e-30
    }
}

impl Scalar for f64 {
    fn tiny() -> Self {
        1e-300
    }
}
