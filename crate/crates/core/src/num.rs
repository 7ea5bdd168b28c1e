//! Scalar abstraction for the numerical kernels.
//!
//! The dense/sparse linear algebra, quadrature rules, and 1D polynomial
//! machinery are generic over [`Real`] so they can be instantiated with `f32`
//! or `f64`. The finite-element layers work with the crate-wide [`Scalar`]
//! alias (`f64`), which is what every solver tolerance in this crate assumes.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

/// Floating-point scalar of the numerical kernels: `f32` or `f64`.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::FloatConst
    + Sum
    + Debug
    + Display
    + LowerExp
    + 'static
{
    /// Shorthand for converting an `f64` literal into `Self`.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Concrete scalar used by the finite-element and solver layers.
pub type Scalar = f64;
