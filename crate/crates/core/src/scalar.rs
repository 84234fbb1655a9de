use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Scalar type every numeric routine in this crate is generic over.
///
/// Implemented for `f32` and `f64`. Most of the calculus only needs the
/// field operations and elementary functions supplied by [`RealField`];
/// `FromPrimitive`/`ToPrimitive` are used to bring literal constants in and
/// to hand values to `f64`-only helpers (log-gamma, reporting).
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + std::fmt::LowerExp + Send + Sync + 'static
{
    /// Machine epsilon of the concrete type.
    fn epsilon() -> Self {
        let two = Self::one() + Self::one();
        let mut e = Self::one();
        while Self::one() + e / two > Self::one() {
            e /= two;
        }
        e
    }
}

impl<T> Real for T where
    T: RealField + Copy + FromPrimitive + ToPrimitive + std::fmt::LowerExp + Send + Sync + 'static
{
}

/// Literal conversion. Panics only for values the target type cannot hold,
/// which never happens for the constants used here.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

#[inline]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
