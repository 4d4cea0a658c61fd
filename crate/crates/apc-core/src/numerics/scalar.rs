//! Floating-point abstraction shared by every kernel in this crate.
//!
//! Models and probes are generic over [`Scalar`] so the same code runs in
//! f32 (the training default) and f64 (used by gradient checks and the
//! LDA eigensolver, where f32 rounding would drown the signal).

use core::fmt::{Debug, Display};

use num_traits::Float;

/// Float type usable in model code: `f32` or `f64`.
pub trait Scalar: Float + Debug + Display + 'static {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// Literal shorthand for constants written in source.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v)
    }

    /// Conversion for counts and sizes used as divisors.
    #[inline]
    fn from_usize(v: usize) -> Self {
        Self::from_f64(v as f64)
    }
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_through_f64() {
        assert_eq!(<f32 as Scalar>::from_f64(1.5).to_f64(), 1.5);
        assert_eq!(<f64 as Scalar>::from_f64(1.5).to_f64(), 1.5);
        assert_eq!(f32::from_usize(7), 7.0f32);
    }
}
