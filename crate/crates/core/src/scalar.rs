//! The scalar abstraction every differentiable computation is written against.
//!
//! Field models, the volume renderer, the regularizers and the curvature
//! operators are generic over [`Real`], so the same code runs on plain
//! floats, on forward-mode [`Dual`](crate::autodiff::Dual) numbers, on
//! second-order [`Dual2`](crate::autodiff::Dual2) numbers, and on any
//! nesting of those.

use std::cell::Cell;
use std::fmt::Debug;
use std::ops::Neg;

use num_traits::{Num, NumAssignOps};

/// A differentiable real scalar.
///
/// Comparisons (`PartialOrd`, [`Real::fmin`], [`Real::fmax`]) only look at
/// the primal value. At ties `fmin`/`fmax` return their receiver, which fixes
/// the one-sided derivative to the first argument.
pub trait Real:
    Num + NumAssignOps + Neg<Output = Self> + Copy + Debug + PartialOrd + Send + Sync + 'static
{
    /// Lifts a constant; every derivative component is zero.
    fn lift(v: f64) -> Self;

    /// The innermost primal value.
    fn value(self) -> f64;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    /// `ln(1 + e^x)` with sharpness 1.
    fn softplus(self) -> Self;
    /// `1 / (1 + e^-x)`.
    fn sigmoid(self) -> Self;

    /// Whether every component (value and derivatives) is finite.
    fn all_finite(self) -> bool;

    fn abs(self) -> Self {
        if self.value() < 0.0 {
            -self
        } else {
            self
        }
    }

    fn fmin(self, other: Self) -> Self {
        if self.value() <= other.value() {
            self
        } else {
            other
        }
    }

    fn fmax(self, other: Self) -> Self {
        if self.value() >= other.value() {
            self
        } else {
            other
        }
    }

    /// `min(max(self, lo), hi)` with first-argument derivatives at ties.
    fn clip(self, lo: f64, hi: f64) -> Self {
        self.fmax(Self::lift(lo)).fmin(Self::lift(hi))
    }

    fn powi(self, n: i32) -> Self {
        let mut base = if n < 0 { Self::one() / self } else { self };
        let mut k = n.unsigned_abs();
        let mut acc = Self::one();
        while k > 0 {
            if k & 1 == 1 {
                acc *= base;
            }
            base *= base;
            k >>= 1;
        }
        acc
    }
}

pub(crate) fn softplus_f64(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

macro_rules! impl_real_float {
    ($t:ty) => {
        impl Real for $t {
            #[inline]
            fn lift(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn value(self) -> f64 {
                self as f64
            }
            #[inline]
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            #[inline]
            fn ln(self) -> Self {
                <$t>::ln(self)
            }
            #[inline]
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            #[inline]
            fn sin(self) -> Self {
                <$t>::sin(self)
            }
            #[inline]
            fn cos(self) -> Self {
                <$t>::cos(self)
            }
            #[inline]
            fn softplus(self) -> Self {
                softplus_f64(self as f64) as $t
            }
            #[inline]
            fn sigmoid(self) -> Self {
                sigmoid_f64(self as f64) as $t
            }
            #[inline]
            fn all_finite(self) -> bool {
                self.is_finite()
            }
        }
    };
}

impl_real_float!(f64);
impl_real_float!(f32);

thread_local! {
    static FIRST_NONFINITE: Cell<Option<&'static str>> = const { Cell::new(None) };
}

/// Records the first primitive that produced a non-finite result from
/// finite inputs on this thread.
#[inline]
pub(crate) fn note_nonfinite(primitive: &'static str) {
    FIRST_NONFINITE.with(|c| {
        if c.get().is_none() {
            c.set(Some(primitive));
        }
    });
}

/// Runs `f` and reports the first primitive that went non-finite inside it.
pub fn track_nonfinite<R>(f: impl FnOnce() -> R) -> (R, Option<&'static str>) {
    let saved = FIRST_NONFINITE.with(|c| c.replace(None));
    let out = f();
    let hit = FIRST_NONFINITE.with(|c| c.replace(saved));
    (out, hit)
}
