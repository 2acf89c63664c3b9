//! Scalar abstraction over the floating-point types the numeric core runs on.

use num_traits::Float;

/// Floating-point scalar for model parameters, rewards and scores.
///
/// The training stack is generic over this so that production runs can use
/// `f32` while gradient checks and oracles instantiate `f64`.
pub trait Scalar:
    Float
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossless round-trip through raw bits, used by the checkpoint format.
    fn to_bits_u64(self) -> u64;
    fn from_bits_u64(bits: u64) -> Self;
    /// Byte width of the on-disk encoding (4 for f32, 8 for f64).
    const BYTE_WIDTH: u8;

    fn from_f64(v: f64) -> Self {
        num_traits::cast(v).expect("f64 conversion")
    }
    fn as_f64(self) -> f64 {
        num_traits::cast(self).expect("f64 conversion")
    }
}

impl Scalar for f32 {
    fn to_bits_u64(self) -> u64 {
        u64::from(self.to_bits())
    }
    fn from_bits_u64(bits: u64) -> Self {
        f32::from_bits(bits as u32)
    }
    const BYTE_WIDTH: u8 = 4;
}

impl Scalar for f64 {
    fn to_bits_u64(self) -> u64 {
        self.to_bits()
    }
    fn from_bits_u64(bits: u64) -> Self {
        f64::from_bits(bits)
    }
    const BYTE_WIDTH: u8 = 8;
}
