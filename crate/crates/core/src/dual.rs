//! Forward-mode dual numbers for the rod stencil Jacobians.
//!
//! Stencil code is written once against [`Real`] and evaluated either with
//! plain `f64` (energies) or with [`Dual`] (energies plus exact first
//! derivatives with respect to up to `N` seeded variables).

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    fn value(self) -> f64;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn atan2(self, x: Self) -> Self;

    fn scale(self, k: f64) -> Self {
        self * Self::cst(k)
    }
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
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
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        self * k
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<const N: usize> {
    pub re: f64,
    pub eps: [f64; N],
}

impl<const N: usize> Dual<N> {
    /// The `i`-th independent variable at value `re`.
    pub fn var(re: f64, i: usize) -> Self {
        let mut eps = [0.0; N];
        eps[i] = 1.0;
        Self { re, eps }
    }

    #[inline]
    fn chain(self, re: f64, d: f64) -> Self {
        let mut eps = self.eps;
        eps.iter_mut().for_each(|e| *e *= d);
        Self { re, eps }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: Self) -> Self {
        self.re += o.re;
        for (a, b) in self.eps.iter_mut().zip(o.eps) {
            *a += b;
        }
        self
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: Self) -> Self {
        self.re -= o.re;
        for (a, b) in self.eps.iter_mut().zip(o.eps) {
            *a -= b;
        }
        self
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn mul(self, o: Self) -> Self {
        let eps = std::array::from_fn(|i| self.eps[i] * o.re + self.re * o.eps[i]);
        Self {
            re: self.re * o.re,
            eps,
        }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.re;
        let re = self.re * inv;
        let eps = std::array::from_fn(|i| (self.eps[i] - re * o.eps[i]) * inv);
        Self { re, eps }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.chain(-self.re, -1.0)
    }
}

impl<const N: usize> Real for Dual<N> {
    #[inline]
    fn cst(v: f64) -> Self {
        Self { re: v, eps: [0.0; N] }
    }
    #[inline]
    fn value(self) -> f64 {
        self.re
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, 0.5 / s)
    }
    #[inline]
    fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    #[inline]
    fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    #[inline]
    fn atan2(self, x: Self) -> Self {
        let r2 = self.re * self.re + x.re * x.re;
        let eps = std::array::from_fn(|i| (x.re * self.eps[i] - self.re * x.eps[i]) / r2);
        Self {
            re: self.re.atan2(x.re),
            eps,
        }
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        self.chain(self.re * k, k)
    }
}

/// Minimal 3-vector over a [`Real`] scalar.
#[derive(Debug, Clone, Copy)]
pub struct V3<T>(pub [T; 3]);

impl<T: Real> V3<T> {
    pub fn from_f64(v: [f64; 3]) -> Self {
        V3(v.map(T::cst))
    }

    #[inline]
    pub fn dot(&self, o: &Self) -> T {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    #[inline]
    pub fn cross(&self, o: &Self) -> Self {
        let [a0, a1, a2] = self.0;
        let [b0, b1, b2] = o.0;
        V3([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])
    }

    #[inline]
    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    #[inline]
    pub fn mul(&self, k: T) -> Self {
        V3(self.0.map(|c| c * k))
    }

    #[inline]
    pub fn div(&self, k: T) -> Self {
        V3(self.0.map(|c| c / k))
    }

    #[inline]
    pub fn add(&self, o: &Self) -> Self {
        V3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }

    #[inline]
    pub fn sub(&self, o: &Self) -> Self {
        V3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }

    pub fn values(&self) -> [f64; 3] {
        self.0.map(|c| c.value())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn elementary_derivatives_match_finite_differences() {
        let x = 0.7;
        let y = -1.3;
        let dx = Dual::<2>::var(x, 0);
        let dy = Dual::<2>::var(y, 1);

        let f = |a: f64, b: f64| (a * b).sin() / (a * a + b * b).sqrt() + b.atan2(a) * a.cos();
        let df = (dx * dy).sin() / (dx * dx + dy * dy).sqrt() + dy.atan2(dx) * dx.cos();
        assert!((df.re - f(x, y)).abs() < 1e-15);
        assert!((df.eps[0] - fd(|a| f(a, y), x)).abs() < 1e-8);
        assert!((df.eps[1] - fd(|b| f(x, b), y)).abs() < 1e-8);
    }

    #[test]
    fn vector_ops() {
        let a = V3::<f64>([1.0, 0.0, 0.0]);
        let b = V3::<f64>([0.0, 1.0, 0.0]);
        assert_eq!(a.cross(&b).0, [0.0, 0.0, 1.0]);
        assert_eq!(a.add(&b).norm(), 2f64.sqrt());
    }
}
