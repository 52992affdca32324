//! Numeric abstraction shared by every solver.
//!
//! The dynamic programs only need ring operations, ordering and a handful of
//! conversions, so they are written once against [`Scalar`] and instantiated
//! for `f64`, `f32` and exact rationals ([`Rational`]).

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// Exact rational scalar. Useful for checking the finite-horizon recursions
/// without rounding; overflows quickly under long discounted iterations.
pub type Rational = Ratio<i64>;

pub trait Scalar:
    Num + Signed + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
    /// `false` for NaN and infinities. Always `true` for exact types.
    fn is_finite_value(self) -> bool;

    /// Absolute slack used when checking that a probability vector sums to one.
    fn sum_tolerance() -> Self;

    /// Conversion from `f64`; panics on values the type cannot represent.
    fn of(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(|| panic!("{v} is not representable"))
    }

    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).unwrap_or_else(|| panic!("{v} is not representable"))
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn pow_u(self, n: usize) -> Self {
        let mut acc = Self::one();
        for _ in 0..n {
            acc = acc * self;
        }
        acc
    }
}

impl Scalar for f64 {
    fn is_finite_value(self) -> bool {
        self.is_finite()
    }
    fn sum_tolerance() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    fn is_finite_value(self) -> bool {
        self.is_finite()
    }
    fn sum_tolerance() -> Self {
        1e-5
    }
}

impl Scalar for Rational {
    fn is_finite_value(self) -> bool {
        true
    }
    fn sum_tolerance() -> Self {
        Ratio::from_integer(0)
    }
}

#[inline]
pub(crate) fn max_of<T: PartialOrd>(a: T, b: T) -> T {
    if b > a {
        b
    } else {
        a
    }
}

#[inline]
pub(crate) fn min_of<T: PartialOrd>(a: T, b: T) -> T {
    if b < a {
        b
    } else {
        a
    }
}

/// Largest absolute entrywise difference of two equally sized slices.
pub fn sup_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len(), "sup distance of tables with different lengths");
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| max_of(acc, (x - y).abs()))
}
