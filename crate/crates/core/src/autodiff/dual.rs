use std::fmt;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign};

use num_traits::{Num, One, Zero};

use crate::scalar::{note_nonfinite, Real};

/// First-order forward-mode number: a value and one directional derivative.
///
/// `T` is itself [`Real`], so `Dual<Dual<f64>>` carries mixed second
/// derivatives along two directions.
#[derive(Clone, Copy, Default)]
pub struct Dual<T> {
    pub value: T,
    pub tangent: T,
}

impl<T: Real> Dual<T> {
    pub fn new(value: T, tangent: T) -> Self {
        Self { value, tangent }
    }

    pub fn constant(value: T) -> Self {
        Self { value, tangent: T::zero() }
    }

    /// A variable seeded with unit tangent.
    pub fn variable(value: T) -> Self {
        Self { value, tangent: T::one() }
    }

    #[inline]
    fn chain(self, f: T, df: T, name: &'static str) -> Self {
        let out = Self { value: f, tangent: df * self.tangent };
        check(name, self.all_finite(), out)
    }
}

#[inline]
fn check<T: Real>(name: &'static str, inputs_finite: bool, out: Dual<T>) -> Dual<T> {
    if inputs_finite && !out.all_finite() {
        note_nonfinite(name);
    }
    out
}

impl<T: fmt::Debug> fmt::Debug for Dual<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dual({:?} + {:?}ε)", self.value, self.tangent)
    }
}

impl<T: Real> PartialEq for Dual<T> {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

impl<T: Real> PartialOrd for Dual<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.value.partial_cmp(&other.value)
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self { value: self.value + rhs.value, tangent: self.tangent + rhs.tangent }
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self { value: self.value - rhs.value, tangent: self.tangent - rhs.tangent }
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Self {
            value: self.value * rhs.value,
            tangent: self.tangent * rhs.value + self.value * rhs.tangent,
        }
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let value = self.value / rhs.value;
        let out = Self { value, tangent: (self.tangent - value * rhs.tangent) / rhs.value };
        check("div", self.all_finite() && rhs.all_finite(), out)
    }
}

impl<T: Real> Rem for Dual<T> {
    type Output = Self;
    fn rem(self, rhs: Self) -> Self {
        let q = T::lift((self.value.value() / rhs.value.value()).trunc());
        Self { value: self.value % rhs.value, tangent: self.tangent - rhs.tangent * q }
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self { value: -self.value, tangent: -self.tangent }
    }
}

macro_rules! assign_ops {
    ($($tr:ident $m:ident $op:tt),*) => {$(
        impl<T: Real> $tr for Dual<T> {
            #[inline]
            fn $m(&mut self, rhs: Self) {
                *self = *self $op rhs;
            }
        }
    )*};
}
assign_ops!(AddAssign add_assign +, SubAssign sub_assign -, MulAssign mul_assign *, DivAssign div_assign /, RemAssign rem_assign %);

impl<T: Real> Zero for Dual<T> {
    fn zero() -> Self {
        Self::constant(T::zero())
    }
    fn is_zero(&self) -> bool {
        self.value.is_zero() && self.tangent.is_zero()
    }
}

impl<T: Real> One for Dual<T> {
    fn one() -> Self {
        Self::constant(T::one())
    }
}

impl<T: Real> Num for Dual<T> {
    type FromStrRadixErr = T::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        T::from_str_radix(s, radix).map(Self::constant)
    }
}

impl<T: Real> Real for Dual<T> {
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
        self.chain(e, e, "exp")
    }
    fn ln(self) -> Self {
        self.chain(self.value.ln(), T::one() / self.value, "log")
    }
    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        self.chain(s, T::lift(0.5) / s, "sqrt")
    }
    fn sin(self) -> Self {
        self.chain(self.value.sin(), self.value.cos(), "sin")
    }
    fn cos(self) -> Self {
        self.chain(self.value.cos(), -self.value.sin(), "cos")
    }
    fn softplus(self) -> Self {
        self.chain(self.value.softplus(), self.value.sigmoid(), "softplus")
    }
    fn sigmoid(self) -> Self {
        let s = self.value.sigmoid();
        self.chain(s, s * (T::one() - s), "sigmoid")
    }
    fn all_finite(self) -> bool {
        self.value.all_finite() && self.tangent.all_finite()
    }
}
