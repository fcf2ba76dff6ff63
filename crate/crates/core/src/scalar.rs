//! Scalar abstraction: every numeric routine in this crate is generic over
//! `Scalar`, instantiated as `f64` for training/verification and `f32` only
//! where the on-disk feature format demands it.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lift an `f64` constant into the scalar type. Panics only if the type
    /// cannot represent ordinary finite literals, which neither float can hit.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal must be representable")
    }

    /// Widen to `f64` (lossless for `f32`/`f64`).
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("float widens to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
