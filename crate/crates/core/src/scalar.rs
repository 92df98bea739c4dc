//! Scalar abstraction shared by every numerical module.
//!
//! All kernels are written against [`Real`], which is implemented for `f32`
//! and `f64`. Tolerances quoted throughout the crate are calibrated for `f64`;
//! the `f32` instantiation is useful for smoke runs and memory-bound sweeps.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::{ComplexField, RealField};
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Real scalar type used by the toolkit.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + FftNum + Debug + Display + LowerExp + Default
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert::<f64, Self>(x)
    }

    /// Converts to `f64` (lossless for both implementors).
    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn int(x: i64) -> Self {
        Self::lit(x as f64)
    }

    /// Machine epsilon.
    fn eps() -> Self;

    /// Smallest positive normal value.
    fn tiny() -> Self;

    /// `ln` of the largest finite value.
    #[inline]
    fn ln_max() -> Self {
        <Self as RealField>::max_value().map(|m| m.ln()).unwrap_or(Self::lit(700.0))
    }
}

impl Real for f32 {
    fn eps() -> Self {
        f32::EPSILON
    }

    fn tiny() -> Self {
        f32::MIN_POSITIVE
    }
}
impl Real for f64 {
    fn eps() -> Self {
        f64::EPSILON
    }

    fn tiny() -> Self {
        f64::MIN_POSITIVE
    }
}

/// Complex scalar over `T`.
pub type Cx<T> = Complex<T>;

#[inline]
pub fn cx<T: Real>(re: T, im: T) -> Cx<T> {
    Complex::new(re, im)
}

#[inline]
pub fn czero<T: Real>() -> Cx<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline]
pub fn cone<T: Real>() -> Cx<T> {
    Complex::new(T::one(), T::zero())
}

#[inline]
pub fn creal<T: Real>(re: T) -> Cx<T> {
    Complex::new(re, T::zero())
}

/// Modulus computed with scaling so that it neither overflows nor underflows.
#[inline]
pub fn cabs<T: Real>(z: Cx<T>) -> T {
    let a = z.re.abs();
    let b = z.im.abs();
    let (big, small) = if a > b { (a, b) } else { (b, a) };
    if big == T::zero() {
        return T::zero();
    }
    let r = small / big;
    big * (T::one() + r * r).sqrt()
}

/// `|re| + |im|`, the cheap norm used for deflation tests.
#[inline]
pub fn cabs1<T: Real>(z: Cx<T>) -> T {
    z.re.abs() + z.im.abs()
}

#[inline]
pub fn cexp<T: Real>(z: Cx<T>) -> Cx<T> {
    let m = z.re.exp();
    Complex::new(m * z.im.cos(), m * z.im.sin())
}

/// `e^{i theta}`.
#[inline]
pub fn cis<T: Real>(theta: T) -> Cx<T> {
    Complex::new(theta.cos(), theta.sin())
}

#[inline]
pub fn csqrt<T: Real>(z: Cx<T>) -> Cx<T> {
    ComplexField::sqrt(z)
}

/// Converts a complex number to its `f64` counterpart.
#[inline]
pub fn cx_f64<T: Real>(z: Cx<T>) -> Complex<f64> {
    Complex::new(z.re.as_f64(), z.im.as_f64())
}
