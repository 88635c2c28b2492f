//! Scalar abstraction shared by all numerical modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type the splat model and statistics are computed in.
///
/// Implemented for `f32` and `f64`. Besides the usual arithmetic this fixes a
/// little-endian byte encoding so snapshots can be written without knowing the
/// concrete type.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Encoded width in bytes.
    const WIDTH: usize;

    /// Converts an `f64` literal, panicking only if the target cannot hold it.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn write_le(self, out: &mut Vec<u8>);

    /// Reads `WIDTH` bytes; `bytes` must be at least that long.
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const WIDTH: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const WIDTH: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
    }
}

/// Two-component vector used for positions and positional gradients.
pub type Vec2<T> = [T; 2];

#[inline]
pub fn norm2<T: Scalar>(v: Vec2<T>) -> T {
    v[0].hypot(v[1])
}

#[inline]
pub fn is_finite2<T: Scalar>(v: Vec2<T>) -> bool {
    v[0].is_finite() && v[1].is_finite()
}
