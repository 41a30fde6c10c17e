use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, NumCast};

/// Floating point scalar the numeric code is generic over: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + NumCast
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn of(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 converts to every Real")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }

    /// Little-endian IEEE-754 single-precision bytes of this value.
    fn to_f32_le(self) -> [u8; 4] {
        (self.f64() as f32).to_le_bytes()
    }
}

impl Real for f32 {}
impl Real for f64 {}
