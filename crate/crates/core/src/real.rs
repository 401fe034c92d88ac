use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating point scalar used by the geometry and radiation formulas: f32 or f64.
pub trait Real:
    Float + FloatConst + FromPrimitive + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Degrees to radians, `sin`, `cos`, `tan` in degrees.
pub(crate) trait Degrees: Real {
    #[inline]
    fn sind(self) -> Self {
        self.to_radians().sin()
    }
    #[inline]
    fn cosd(self) -> Self {
        self.to_radians().cos()
    }
}

impl<T: Real> Degrees for T {}
