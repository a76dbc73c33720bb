//! Scalar abstraction: the numeric core is generic over the float type.

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar the numeric core is generic over.
///
/// Implemented for `f32` and `f64`. The bounds collect what the modulator,
/// the filter designs and the cone solver actually need: ordinary float
/// arithmetic, mathematical constants, and conversions from literals.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into this scalar type.
    fn real(v: f64) -> Self {
        Self::from_f64(v).expect("literal out of range for scalar type")
    }

    /// Converts a count into this scalar type.
    fn count(v: usize) -> Self {
        Self::from_usize(v).expect("count out of range for scalar type")
    }

    /// Widens to `f64` (exact for `f32` and `f64`).
    fn widen(self) -> f64 {
        self.to_f64().expect("scalar widens to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
