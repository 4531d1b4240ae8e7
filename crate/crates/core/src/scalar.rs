//! Floating-point abstraction shared by the special-function and quadrature kernels.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst};

/// Real scalar the kernels are written against.
///
/// Every `Float + FloatConst` type qualifies; the solver layers instantiate it with `f64`.
pub trait Scalar: Float + FloatConst + Debug + Display + Send + Sync + 'static {
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as num_traits::NumCast>::from(x).expect("literal representable in scalar type")
    }

    /// Converts a count or index.
    #[inline]
    fn from_usize(k: usize) -> Self {
        <Self as num_traits::NumCast>::from(k).expect("integer representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where T: Float + FloatConst + Debug + Display + Send + Sync + 'static {}
