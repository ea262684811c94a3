//! The arithmetic interface shared by every evaluation semantics.
//!
//! An expression is evaluated by a single generic routine; what the result
//! means (a floating-point value, an interval enclosure, a value with exact
//! first and second derivatives, …) is decided by the [`Number`] type it is
//! instantiated with.

use std::cmp::Ordering;

use thiserror::Error;

use crate::interval::Interval;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("division by a quantity that may be zero")]
    DivisionByZero,
    #[error("square root of a quantity that may be negative")]
    NegativeSqrt,
    #[error("non-finite result in {0}")]
    NonFinite(&'static str),
    #[error("interval with lower bound above upper bound")]
    Inverted,
}

/// Ring-like arithmetic with the elementary functions used by expressions.
pub trait Number: Clone + Send + Sync + std::fmt::Debug {
    fn constant(c: f64) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn recip(&self) -> Result<Self, DomainError>;
    fn powi(&self, k: i32) -> Result<Self, DomainError>;
    fn sqrt(&self) -> Result<Self, DomainError>;
    fn exp(&self) -> Result<Self, DomainError>;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn tanh(&self) -> Self;

    /// Multiplication by a binary64 constant.
    fn scale(&self, c: f64) -> Self {
        self.mul(&Self::constant(c))
    }

    fn div(&self, o: &Self) -> Result<Self, DomainError> {
        Ok(self.mul(&o.recip()?))
    }

    /// Ordering of the two values when it is certain; `None` when the values
    /// may overlap (interval semantics).
    fn certainly(&self, o: &Self) -> Option<Ordering>;

    /// Smallest member of the type containing both operands. Only called when
    /// [`Number::certainly`] returned `None`.
    fn hull(&self, o: &Self) -> Self;

    fn min(&self, o: &Self) -> Self {
        match self.certainly(o) {
            Some(Ordering::Greater) => o.clone(),
            Some(_) => self.clone(),
            None => self.hull(o),
        }
    }

    fn max(&self, o: &Self) -> Self {
        match self.certainly(o) {
            Some(Ordering::Less) => o.clone(),
            Some(_) => self.clone(),
            None => self.hull(o),
        }
    }
}

fn finite<T: Scalar>(v: T, what: &'static str) -> Result<T, DomainError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(DomainError::NonFinite(what))
    }
}

macro_rules! point_number {
    ($t:ty) => {
        impl Number for $t {
            #[inline]
            fn constant(c: f64) -> Self {
                c as $t
            }
            #[inline]
            fn add(&self, o: &Self) -> Self {
                self + o
            }
            #[inline]
            fn sub(&self, o: &Self) -> Self {
                self - o
            }
            #[inline]
            fn mul(&self, o: &Self) -> Self {
                self * o
            }
            #[inline]
            fn neg(&self) -> Self {
                -self
            }
            fn recip(&self) -> Result<Self, DomainError> {
                if *self == 0.0 {
                    return Err(DomainError::DivisionByZero);
                }
                finite(1.0 / self, "reciprocal")
            }
            fn powi(&self, k: i32) -> Result<Self, DomainError> {
                if k < 0 && *self == 0.0 {
                    return Err(DomainError::DivisionByZero);
                }
                finite(<$t>::powi(*self, k), "power")
            }
            fn sqrt(&self) -> Result<Self, DomainError> {
                if *self < 0.0 {
                    return Err(DomainError::NegativeSqrt);
                }
                Ok(<$t>::sqrt(*self))
            }
            fn exp(&self) -> Result<Self, DomainError> {
                finite(<$t>::exp(*self), "exp")
            }
            #[inline]
            fn sin(&self) -> Self {
                <$t>::sin(*self)
            }
            #[inline]
            fn cos(&self) -> Self {
                <$t>::cos(*self)
            }
            #[inline]
            fn tanh(&self) -> Self {
                <$t>::tanh(*self)
            }
            #[inline]
            fn scale(&self, c: f64) -> Self {
                self * (c as $t)
            }
            fn certainly(&self, o: &Self) -> Option<Ordering> {
                Some(self.partial_cmp(o).unwrap_or(Ordering::Equal))
            }
            fn hull(&self, _o: &Self) -> Self {
                *self
            }
        }
    };
}

point_number!(f64);
point_number!(f32);

impl<T: Scalar> Number for Interval<T> {
    #[inline]
    fn constant(c: f64) -> Self {
        Interval::from_f64(c)
    }
    #[inline]
    fn add(&self, o: &Self) -> Self {
        Interval::add(self, o)
    }
    #[inline]
    fn sub(&self, o: &Self) -> Self {
        Interval::sub(self, o)
    }
    #[inline]
    fn mul(&self, o: &Self) -> Self {
        Interval::mul(self, o)
    }
    #[inline]
    fn neg(&self) -> Self {
        Interval::neg(self)
    }
    fn recip(&self) -> Result<Self, DomainError> {
        Interval::recip(self)
    }
    fn powi(&self, k: i32) -> Result<Self, DomainError> {
        Interval::powi(self, k)
    }
    fn sqrt(&self) -> Result<Self, DomainError> {
        Interval::sqrt(self)
    }
    fn exp(&self) -> Result<Self, DomainError> {
        Interval::exp(self)
    }
    fn sin(&self) -> Self {
        Interval::sin(self)
    }
    fn cos(&self) -> Self {
        Interval::cos(self)
    }
    fn tanh(&self) -> Self {
        Interval::tanh(self)
    }
    fn certainly(&self, o: &Self) -> Option<Ordering> {
        Interval::certainly(self, o)
    }
    fn hull(&self, o: &Self) -> Self {
        Interval::hull(self, o)
    }
}
