//! Scalar abstraction shared by the rigid-body, kinematics and solver code.

use nalgebra::RealField;
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar usable throughout the crate: `f32` or `f64`.
pub trait Real: RealField + Copy + FloatConst + FromPrimitive + ToPrimitive {
    /// Machine epsilon of the type.
    const EPS: Self;

    /// Converts an `f64` literal. Infallible for the supported float types.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn to_deg(self) -> Self {
        self * Self::lit(180.0) / Self::PI()
    }

    #[inline]
    fn to_rad(self) -> Self {
        self * Self::PI() / Self::lit(180.0)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Real for f32 {
    const EPS: Self = f32::EPSILON;
}

impl Real for f64 {
    const EPS: Self = f64::EPSILON;
}
