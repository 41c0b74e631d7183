use std::fmt;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign};

use num_traits::{Num, One, Zero};

use crate::scalar::{note_nonfinite, Real};

/// Second-order forward-mode number along a single direction `u`:
/// `value = f(x)`, `first = Df(x)[u]`, `second = D²f(x)[u, u]`.
#[derive(Clone, Copy, Default)]
pub struct Dual2<T> {
    pub value: T,
    pub first: T,
    pub second: T,
}

impl<T: Real> Dual2<T> {
    pub fn new(value: T, first: T, second: T) -> Self {
        Self { value, first, second }
    }

    pub fn constant(value: T) -> Self {
        Self { value, first: T::zero(), second: T::zero() }
    }

    /// Input coordinate moving with speed `first` along the direction.
    pub fn seeded(value: T, first: T) -> Self {
        Self { value, first, second: T::zero() }
    }

    #[inline]
    fn chain(self, f0: T, f1: T, f2: T, name: &'static str) -> Self {
        let out = Self {
            value: f0,
            first: f1 * self.first,
            second: f1 * self.second + f2 * self.first * self.first,
        };
        if self.all_finite() && !out.all_finite() {
            note_nonfinite(name);
        }
        out
    }

    fn recip(self) -> Self {
        let r = T::one() / self.value;
        let r2 = r * r;
        self.chain(r, -r2, T::lift(2.0) * r2 * r, "div")
    }
}

impl<T: fmt::Debug> fmt::Debug for Dual2<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dual2({:?}; {:?}; {:?})", self.value, self.first, self.second)
    }
}

impl<T: Real> PartialEq for Dual2<T> {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

impl<T: Real> PartialOrd for Dual2<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.value.partial_cmp(&other.value)
    }
}

impl<T: Real> Add for Dual2<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self {
            value: self.value + rhs.value,
            first: self.first + rhs.first,
            second: self.second + rhs.second,
        }
    }
}

impl<T: Real> Sub for Dual2<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self {
            value: self.value - rhs.value,
            first: self.first - rhs.first,
            second: self.second - rhs.second,
        }
    }
}

impl<T: Real> Mul for Dual2<T> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let two = T::lift(2.0);
        Self {
            value: self.value * rhs.value,
            first: self.first * rhs.value + self.value * rhs.first,
            second: self.second * rhs.value + two * self.first * rhs.first + self.value * rhs.second,
        }
    }
}

impl<T: Real> Div for Dual2<T> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        self * rhs.recip()
    }
}

impl<T: Real> Rem for Dual2<T> {
    type Output = Self;
    fn rem(self, rhs: Self) -> Self {
        let q = T::lift((self.value.value() / rhs.value.value()).trunc());
        Self {
            value: self.value % rhs.value,
            first: self.first - rhs.first * q,
            second: self.second - rhs.second * q,
        }
    }
}

impl<T: Real> Neg for Dual2<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self { value: -self.value, first: -self.first, second: -self.second }
    }
}

macro_rules! assign_ops {
    ($($tr:ident $m:ident $op:tt),*) => {$(
        impl<T: Real> $tr for Dual2<T> {
            #[inline]
            fn $m(&mut self, rhs: Self) {
                *self = *self $op rhs;
            }
        }
    )*};
}
assign_ops!(AddAssign add_assign +, SubAssign sub_assign -, MulAssign mul_assign *, DivAssign div_assign /, RemAssign rem_assign %);

impl<T: Real> Zero for Dual2<T> {
    fn zero() -> Self {
        Self::constant(T::zero())
    }
    fn is_zero(&self) -> bool {
        self.value.is_zero() && self.first.is_zero() && self.second.is_zero()
    }
}

impl<T: Real> One for Dual2<T> {
    fn one() -> Self {
        Self::constant(T::one())
    }
}

impl<T: Real> Num for Dual2<T> {
    type FromStrRadixErr = T::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        T::from_str_radix(s, radix).map(Self::constant)
    }
}

impl<T: Real> Real for Dual2<T> {
    #[inline]
    fn lift(v: f64) -> Self {
        Self::constant(T::lift(v))
    }
    #[inline]
    fn value(self) -> f64 {
        self.value.value()
    }
    fn exp(self) -> Self {
        let e = self.value.exp();
        self.chain(e, e, e, "exp")
    }
    fn ln(self) -> Self {
        let r = T::one() / self.value;
        self.chain(self.value.ln(), r, -r * r, "log")
    }
    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        let d1 = T::lift(0.5) / s;
        self.chain(s, d1, -d1 / (T::lift(2.0) * self.value), "sqrt")
    }
    fn sin(self) -> Self {
        let (s, c) = (self.value.sin(), self.value.cos());
        self.chain(s, c, -s, "sin")
    }
    fn cos(self) -> Self {
        let (s, c) = (self.value.sin(), self.value.cos());
        self.chain(c, -s, -c, "cos")
    }
    fn softplus(self) -> Self {
        let s = self.value.sigmoid();
        self.chain(self.value.softplus(), s, s * (T::one() - s), "softplus")
    }
    fn sigmoid(self) -> Self {
        let s = self.value.sigmoid();
        let d1 = s * (T::one() - s);
        self.chain(s, d1, d1 * (T::one() - T::lift(2.0) * s), "sigmoid")
    }
    fn all_finite(self) -> bool {
        self.value.all_finite() && self.first.all_finite() && self.second.all_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Dual;

    #[test]
    fn cubic_second_derivative() {
        let x = Dual2::seeded(2.0f64, 1.0);
        let y = x * x * x;
        assert_eq!(y.first, 12.0);
        assert_eq!(y.second, 12.0);
    }

    #[test]
    fn agrees_with_nested_duals_on_polynomial() {
        // f(x) = 3x⁴ - 2x² + x along u = 0.7
        fn f<S: Real>(x: S) -> S {
            S::lift(3.0) * x.powi(4) - S::lift(2.0) * x * x + x
        }
        let (x0, u) = (1.3, 0.7);
        let d2 = f(Dual2::seeded(x0, u));
        let nested = f(Dual::new(Dual::new(x0, u), Dual::new(u, 0.0)));
        assert!((d2.first - nested.value.tangent).abs() < 1e-12);
        assert!((d2.second - nested.tangent.tangent).abs() < 1e-12);
    }

    #[test]
    fn transcendental_second_derivatives() {
        let x = 0.37;
        let checks: [(Dual2<f64>, f64); 4] = [
            (Dual2::seeded(x, 1.0).exp(), x.exp()),
            (Dual2::seeded(x, 1.0).ln(), -1.0 / (x * x)),
            (Dual2::seeded(x, 1.0).sin(), -x.sin()),
            (Dual2::seeded(x, 1.0).sqrt(), -0.25 * x.powf(-1.5)),
        ];
        for (d, expected) in checks {
            assert!((d.second - expected).abs() < 1e-12, "{d:?} vs {expected}");
        }
    }
}
