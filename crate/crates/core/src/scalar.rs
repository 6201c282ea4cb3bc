//! Scalar abstraction shared by every solver in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Infallible for the two implementors.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// `tight` when the type can resolve it, otherwise a multiple of the
    /// machine epsilon.
    #[inline]
    fn tol(tight: f64) -> Self {
        let floor = Self::epsilon() * Self::lit(1024.0);
        Self::lit(tight).max(floor)
    }

    /// Lossy conversion used for RNG plumbing and reporting.
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `exp` with its argument clamped from below at -700.
#[inline]
pub fn exp_clamped<T: Real>(x: T) -> T {
    x.max(T::lit(-700.0)).exp()
}

/// Relative difference `|a - b| / max(|a|, |b|, 1e-300)`.
#[inline]
pub fn rel_diff<T: Real>(a: T, b: T) -> T {
    let scale = a.abs().max(b.abs()).max(T::min_positive_value());
    (a - b).abs() / scale
}
