//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point type the bound evaluators are generic over.
///
/// Implemented for `f32` and `f64`. Tolerances scale with the precision of
/// the type so that the same code validates `f32` tables without spurious
/// normalization failures.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Allowed deviation of a probability vector's sum from one.
    fn validation_tol() -> Self;

    /// Tolerance for internal identity checks (reconstruction, chain rule).
    fn identity_tol() -> Self;

    /// Converts an `f64` literal. Panics only for values the type cannot hold.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn validation_tol() -> Self {
        1e-9
    }
    fn identity_tol() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    fn validation_tol() -> Self {
        1e-5
    }
    fn identity_tol() -> Self {
        1e-6
    }
}
