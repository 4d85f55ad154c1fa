use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssignOps};

/// Floating point type the numerical core is generic over.
///
/// Implemented for `f32` and `f64`. Matrix products take the BLAS-like fast path
/// in `ndarray` for both.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssignOps
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Size in bytes, used as the scalar tag in checkpoint files.
    const BYTES: u8;

    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 converts to any Scalar")
    }

    fn of_usize(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize converts to any Scalar")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    /// Tolerance for "is this vector unit / on the simplex" checks.
    fn unit_tol() -> Self {
        Self::lit(1e-9).max(Self::epsilon() * Self::lit(16.0))
    }
}

impl Scalar for f32 {
    const BYTES: u8 = 4;
}

impl Scalar for f64 {
    const BYTES: u8 = 8;
}
