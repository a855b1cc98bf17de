//! Floating point abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign};

/// Real scalar the meshes, layers and losses are generic over: `f32` or `f64`.
///
/// Training runs in `f32`; gradient checks run in `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssign
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Tag written into checkpoints so a file is only ever read back at its own precision.
    const DTYPE: &'static str;

    /// Lossless widening used by serialization and metric reporting.
    fn to_f64_lossless(self) -> f64;

    /// Rounds an `f64` to the nearest representable value.
    fn from_f64_rounded(value: f64) -> Self;
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";

    fn to_f64_lossless(self) -> f64 {
        f64::from(self)
    }

    fn from_f64_rounded(value: f64) -> Self {
        value as f32
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";

    fn to_f64_lossless(self) -> f64 {
        self
    }

    fn from_f64_rounded(value: f64) -> Self {
        value
    }
}

/// Shorthand for literal constants inside generic code.
#[inline]
pub(crate) fn lit<T: Scalar>(value: f64) -> T {
    T::from_f64_rounded(value)
}
