//! Scalar abstraction for score and weight arithmetic.
//!
//! Everything on the ensembling path only needs a commutative ring with an
//! order, so it is written against [`Scalar`] and works with `f32`, `f64`
//! and exact rationals alike. File formats and the CLI fix `f64`.

use std::fmt::Debug;

use num_rational::Rational64;
use num_traits::{Num, ToPrimitive};

pub trait Scalar: Num + Copy + PartialOrd + Debug + Send + Sync + 'static {
    fn to_f64(self) -> f64;

    /// Nearest representable value. Rationals use a continued-fraction
    /// approximation, so `0.01` becomes exactly `1/100`.
    fn from_f64(value: f64) -> Self;

    fn from_count(n: usize) -> Self;

    fn is_finite(self) -> bool;

    /// `true` when the value is finite and inside `[0, 1]`.
    fn is_unit(self) -> bool {
        self.is_finite() && self >= Self::zero() && self <= Self::one()
    }
}

impl Scalar for f64 {
    fn to_f64(self) -> f64 {
        self
    }

    fn from_f64(value: f64) -> Self {
        value
    }

    fn from_count(n: usize) -> Self {
        n as f64
    }

    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Scalar for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }

    fn from_f64(value: f64) -> Self {
        value as f32
    }

    fn from_count(n: usize) -> Self {
        n as f32
    }

    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
}

impl Scalar for Rational64 {
    fn to_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    fn from_f64(value: f64) -> Self {
        Rational64::approximate_float(value).unwrap_or_else(|| Rational64::from_integer(0))
    }

    fn from_count(n: usize) -> Self {
        Rational64::from_integer(n as i64)
    }

    fn is_finite(self) -> bool {
        true
    }
}

/// Total order helper for scalars known to be finite.
pub(crate) fn cmp<T: Scalar>(a: T, b: T) -> std::cmp::Ordering {
    a.partial_cmp(&b).unwrap_or(std::cmp::Ordering::Equal)
}
