//! Scalar abstraction used by every kinematics code path.
//!
//! Kinematics, the relative transform and the constraint residual are written
//! once against [`Real`] and instantiated with `f64`, `Dual<f64>` (first
//! derivatives) or `Dual<Dual<f64>>` (second derivatives).

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn from_f64(v: f64) -> Self;

    /// The primal (real) part, stripping every derivative layer.
    fn value(self) -> f64;

    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;
    fn acos(self) -> Self;
    fn atan2(self, x: Self) -> Self;

    /// True when the primal part and every derivative component is finite.
    fn is_finite(self) -> bool;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn scale(self, k: f64) -> Self {
        self * Self::from_f64(k)
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn acos(self) -> Self {
        f64::acos(self)
    }
    #[inline]
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        self * k
    }
}

/// Forward-mode dual number `re + du·ε` with `ε² = 0`.
///
/// Nesting (`Dual<Dual<f64>>`) yields exact second derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub du: T,
}

impl<T: Real> Dual<T> {
    pub fn new(re: T, du: T) -> Self {
        Self { re, du }
    }

    pub fn constant(re: T) -> Self {
        Self { re, du: T::zero() }
    }

    pub fn variable(re: T) -> Self {
        Self { re, du: T::one() }
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.du + o.du)
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.du - o.du)
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re, self.re * o.du + self.du * o.re)
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = T::one() / o.re;
        let re = self.re * inv;
        Self::new(re, (self.du - re * o.du) * inv)
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.re, -self.du)
    }
}

impl<T: Real> AddAssign for Dual<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> SubAssign for Dual<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real> MulAssign for Dual<T> {
    #[inline]
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<T: Real> Real for Dual<T> {
    #[inline]
    fn from_f64(v: f64) -> Self {
        Self::constant(T::from_f64(v))
    }

    #[inline]
    fn value(self) -> f64 {
        self.re.value()
    }

    #[inline]
    fn sin(self) -> Self {
        Self::new(self.re.sin(), self.du * self.re.cos())
    }

    #[inline]
    fn cos(self) -> Self {
        Self::new(self.re.cos(), -(self.du * self.re.sin()))
    }

    #[inline]
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        Self::new(s, self.du / (s + s))
    }

    #[inline]
    fn acos(self) -> Self {
        let d = (T::one() - self.re * self.re).sqrt();
        Self::new(self.re.acos(), -(self.du / d))
    }

    #[inline]
    fn atan2(self, x: Self) -> Self {
        let r2 = x.re * x.re + self.re * self.re;
        Self::new(self.re.atan2(x.re), (x.re * self.du - self.re * x.du) / r2)
    }

    #[inline]
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.du.is_finite()
    }

    #[inline]
    fn scale(self, k: f64) -> Self {
        Self::new(self.re.scale(k), self.du.scale(k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type D = Dual<f64>;
    type DD = Dual<Dual<f64>>;

    fn central(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn first_derivatives_match_finite_differences() {
        let x = 0.37;
        let v = D::variable(x);
        assert!((v.sin().du - central(f64::sin, x)).abs() < 1e-9);
        assert!((v.cos().du - central(f64::cos, x)).abs() < 1e-9);
        assert!((v.sqrt().du - central(f64::sqrt, x)).abs() < 1e-9);
        assert!((v.acos().du - central(f64::acos, x)).abs() < 1e-9);
        let y = D::constant(0.8);
        assert!((v.atan2(y).du - central(|t| t.atan2(0.8), x)).abs() < 1e-9);
        assert!((y.atan2(v).du - central(|t| 0.8f64.atan2(t), x)).abs() < 1e-9);
        assert!(((v / (v * v + D::from_f64(1.0))).du - central(|t| t / (t * t + 1.0), x)).abs() < 1e-9);
    }

    #[test]
    fn nested_duals_give_second_derivatives() {
        // f(x) = sin(x) * x^2, f'' = -sin x x^2 + 4 x cos x + 2 sin x
        let x = 0.9_f64;
        let v = DD::new(D::variable(x), D::constant(1.0));
        let f = v.sin() * v * v;
        let expected = -x.sin() * x * x + 4.0 * x * x.cos() + 2.0 * x.sin();
        assert!((f.du.du - expected).abs() < 1e-14);
        assert_eq!(f.value(), x.sin() * x * x);
    }
}
