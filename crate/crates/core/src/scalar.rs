//! Scalar abstraction shared by the numerical modules.

use nalgebra::RealField;
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

pub use num_complex::Complex;

/// Real floating-point scalar usable by every solver in the crate.
///
/// Implemented for `f32` and `f64`. Linear algebra goes through
/// [`nalgebra::RealField`]; conversions go through `num-traits`.
pub trait Real:
    RealField + Copy + FloatConst + FromPrimitive + ToPrimitive + Default + Send + Sync + 'static
{
    /// Converts an `f64` constant into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("integer representable in scalar type")
    }

    /// Lossy conversion used for output and diagnostics.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Unit roundoff of the type.
    fn epsilon() -> Self;
}

impl Real for f32 {
    fn epsilon() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn epsilon() -> Self {
        f64::EPSILON
    }
}

#[inline]
pub(crate) fn cplx<T: Real>(re: T) -> Complex<T> {
    Complex::new(re, T::zero())
}

#[inline]
pub(crate) fn cis<T: Real>(theta: T) -> Complex<T> {
    Complex::new(theta.cos(), theta.sin())
}

#[inline]
pub(crate) fn norm_sqr<T: Real>(z: Complex<T>) -> T {
    z.re * z.re + z.im * z.im
}

#[inline]
pub(crate) fn modulus<T: Real>(z: Complex<T>) -> T {
    norm_sqr(z).sqrt()
}

#[inline]
pub(crate) fn conj<T: Real>(z: Complex<T>) -> Complex<T> {
    Complex::new(z.re, -z.im)
}
