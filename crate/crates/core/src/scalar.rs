//! Scalar abstractions.
//!
//! The maxout and ReLU evaluators only need ordered ring arithmetic, so they
//! work over exact rationals as well as floats. Anything touching attention
//! needs `exp` and is bound by [`Real`].

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, Num, Signed};

/// Ordered field element: enough to evaluate max-affine and ReLU networks.
pub trait Scalar: Clone + Debug + PartialOrd + Num + Signed {
    /// Larger of two values; ties keep `self`.
    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl<T> Scalar for T where T: Clone + Debug + PartialOrd + Num + Signed {}

/// Floating-point scalar used by the Transformer evaluator.
pub trait Real: Scalar + Float + FromPrimitive + Copy + Send + Sync {}

impl<T> Real for T where T: Scalar + Float + FromPrimitive + Copy + Send + Sync {}

/// Exact rational scalar, handy for checking identities with zero tolerance.
pub type Rational = num_rational::BigRational;

/// Convert an `f64` to the exact rational with the same value.
pub fn rational_from_f64(x: f64) -> Rational {
    Rational::from_float(x).expect("finite value")
}
