//! Floating-point scalar abstraction for the numeric side of the crate.
//!
//! Symbolic work is exact (rational constants); numbers only appear when an
//! expression is evaluated, when Jacobians are ranked, or when a path is
//! developed. Those routines are generic over [`Real`] so they run in `f32`
//! or `f64`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar usable by evaluation, linear algebra and integration.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + nalgebra::RealField
    + Copy
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`.
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 conversion")
    }

    /// Lossy conversion to `f64`.
    fn to_f64_lossy(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Absolute value without the `Float`/`RealField` method ambiguity.
#[inline]
pub fn abs<T: Real>(x: T) -> T {
    Float::abs(x)
}

#[inline]
pub fn max<T: Real>(a: T, b: T) -> T {
    Float::max(a, b)
}

#[inline]
pub fn sqrt<T: Real>(x: T) -> T {
    Float::sqrt(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_round_trip() {
        assert_eq!(f64::from_f64_lossy(0.25).to_f64_lossy(), 0.25);
        assert_eq!(f32::from_f64_lossy(0.5).to_f64_lossy(), 0.5);
        assert_eq!(abs(-2.0f32), 2.0);
        assert_eq!(max(1.0f64, 3.0), 3.0);
    }
}
