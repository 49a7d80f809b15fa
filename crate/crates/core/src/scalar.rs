use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar the geometry and tracking code is generic over: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        // every finite f64 maps onto f32/f64 (possibly rounded)
        Self::from_f64(x).unwrap()
    }

    /// Lossy conversion to `f64`.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
