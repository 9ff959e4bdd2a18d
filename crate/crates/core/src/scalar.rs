//! Scalar abstraction: every numerical kernel is generic over `f32`/`f64`.
//!
//! Training and inference run in single precision; gradient-check oracles
//! instantiate the same code in double precision.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssign};

pub trait Scalar: Float + NumAssign + Sum + Debug + Display + Send + Sync + 'static {
    /// Bytes per value in the on-disk little-endian layout.
    const BYTE_WIDTH: usize;

    fn from_f64(x: f64) -> Self;

    fn to_f64_lossy(self) -> f64;

    /// Stable bit pattern, for digests and bitwise comparisons.
    fn to_bits_u64(self) -> u64;

    fn write_le(self, out: &mut Vec<u8>);

    /// Reads one value from the first `BYTE_WIDTH` bytes of `bytes`.
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const BYTE_WIDTH: usize = 4;

    fn from_f64(x: f64) -> Self {
        x as f32
    }

    fn to_f64_lossy(self) -> f64 {
        f64::from(self)
    }

    fn to_bits_u64(self) -> u64 {
        u64::from(self.to_bits())
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const BYTE_WIDTH: usize = 8;

    fn from_f64(x: f64) -> Self {
        x
    }

    fn to_f64_lossy(self) -> f64 {
        self
    }

    fn to_bits_u64(self) -> u64 {
        self.to_bits()
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
    }
}
