use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar the geometry and camera code is generic over: f32 or f64.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Lossy conversion from an f64 literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    /// Angle below which series expansions replace the closed forms.
    #[inline]
    fn small_angle() -> Self {
        Self::default_epsilon().powf(Self::lit(0.25))
    }
}

impl Real for f32 {}
impl Real for f64 {}
