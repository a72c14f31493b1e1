//! Scalar abstraction: every geometric/numeric routine in this crate is
//! generic over [`Real`], instantiated as `f32` (render fast path) or `f64`
//! (world model, evaluation, transport).

use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar: f32 or f64.
pub trait Real: nalgebra::RealField + Copy + Default + FromPrimitive + ToPrimitive {
    /// `2^i` by exponent-bit manipulation; `i` must stay inside the normal
    /// exponent range.
    fn exp2_i32(i: i32) -> Self;

    /// Truncating cast, the plain `as` conversion.
    fn as_i32(self) -> i32;
}

impl Real for f32 {
    #[inline(always)]
    fn exp2_i32(i: i32) -> Self {
        f32::from_bits(((i + 127) as u32) << 23)
    }

    #[inline(always)]
    fn as_i32(self) -> i32 {
        self as i32
    }
}

impl Real for f64 {
    #[inline(always)]
    fn exp2_i32(i: i32) -> Self {
        f64::from_bits(((i as i64 + 1023) as u64) << 52)
    }

    #[inline(always)]
    fn as_i32(self) -> i32 {
        self as i32
    }
}

/// Convert an `f64` literal/value into the working scalar type.
#[inline]
pub fn real<S: Real>(x: f64) -> S {
    S::from_f64(x).expect("f64 -> scalar conversion")
}

/// Lossy conversion back to `f64` (exact for f64, widening for f32).
#[inline]
pub fn to_f64<S: Real>(x: S) -> f64 {
    x.to_f64().expect("scalar -> f64 conversion")
}
