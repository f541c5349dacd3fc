use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar the engine is generic over.
///
/// Implemented for `f32` and `f64`. Tolerances, rates and reported values
/// are all carried in the scalar type; random variates are drawn in `f64`
/// and converted.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts a literal, panicking only if the literal is not representable.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("literal representable in scalar type")
    }

    fn from_usize_lossy(value: usize) -> Self {
        Self::from_usize(value).expect("usize representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Total order used for canonical sorting of symbolic terms.
    fn total_cmp_scalar(&self, other: &Self) -> std::cmp::Ordering {
        self.to_f64_lossy().total_cmp(&other.to_f64_lossy())
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
