use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point element type shared by every numeric routine in the crate.
///
/// Implemented for `f32` and `f64`. Finite-difference tolerances in the test
/// suite assume `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Never fails for the supported types.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Total order over scalars for sorting; NaN sorts last.
pub fn total_cmp<T: Scalar>(a: &T, b: &T) -> std::cmp::Ordering {
    a.partial_cmp(b).unwrap_or_else(|| match (a.is_nan(), b.is_nan()) {
        (true, false) => std::cmp::Ordering::Greater,
        (false, true) => std::cmp::Ordering::Less,
        _ => std::cmp::Ordering::Equal,
    })
}

/// Element type for dense elimination that may be exact (rationals) or
/// floating point.
pub trait Field: Clone + Debug + PartialOrd + num_traits::Num + num_traits::Signed {
    /// Whether `pivot` counts as zero next to entries of magnitude `scale`.
    fn negligible(pivot: &Self, scale: &Self) -> bool;
}

impl Field for f32 {
    fn negligible(pivot: &Self, scale: &Self) -> bool {
        pivot.abs() <= 1e-6 * scale.max(1e-30)
    }
}

impl Field for f64 {
    fn negligible(pivot: &Self, scale: &Self) -> bool {
        pivot.abs() <= 1e-12 * scale.max(1e-300)
    }
}

impl Field for num_rational::Ratio<i64> {
    fn negligible(pivot: &Self, _scale: &Self) -> bool {
        num_traits::Zero::is_zero(pivot)
    }
}
