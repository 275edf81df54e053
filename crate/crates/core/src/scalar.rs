//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All model code is written against [`Scalar`] so the same network can be
//! run in `f64` (the default, required for meaningful gradient checks) or
//! `f32`. Values that cross a file boundary are widened to `f64` first.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + 'static
{
    /// Probability clamp used by binary cross-entropy.
    const BCE_EPS: Self;

    /// Short type tag written into checkpoints.
    const NAME: &'static str;

    /// Converts an `f64` literal. Panics only if the value is unrepresentable,
    /// which cannot happen for finite inputs with `f32`/`f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count fits in float")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    const BCE_EPS: Self = 1e-12;
    const NAME: &'static str = "f64";
}

impl Scalar for f32 {
    // 1e-12 would round to an endpoint once subtracted from 1.0 in f32.
    const BCE_EPS: Self = 1e-7;
    const NAME: &'static str = "f32";
}

/// Logistic function evaluated through the exponential of a non-positive
/// argument so it never overflows.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
