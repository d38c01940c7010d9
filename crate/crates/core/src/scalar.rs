//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::{Product, Sum};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar: `f32` or `f64`.
///
/// Math goes through [`RealField`] so the small dense blocks can use nalgebra directly;
/// conversions go through num-traits.
pub trait Real:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Product
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Machine epsilon of the type.
    const EPS: f64;

    /// Converts an `f64` constant. Every finite `f64` maps to some value of both supported types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(k: usize) -> Self {
        Self::lit(k as f64)
    }

    /// Absolute tolerance `x`, floored at a few hundred ulps so `f32` callers get a usable bound.
    #[inline]
    fn tol(x: f64) -> Self {
        Self::lit(x.max(256.0 * Self::EPS))
    }
}

impl Real for f32 {
    const EPS: f64 = f32::EPSILON as f64;
}

impl Real for f64 {
    const EPS: f64 = f64::EPSILON;
}

/// Binomial coefficient C(n, k); zero when `k > n`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

pub fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}
