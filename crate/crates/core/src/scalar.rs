//! Floating-point scalar abstraction shared by every evaluator.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Binary floating-point type the evaluators and the verifier are generic over.
///
/// Besides the usual `num_traits` surface this exposes the neighbouring
/// representable values, which the interval layer uses for outward rounding,
/// and directed conversions from `f64` literals.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + std::fmt::LowerExp
    + Default
    + Send
    + Sync
    + crate::number::Number
    + 'static
{
    /// Smallest representable value strictly greater than `self`.
    fn succ(self) -> Self;
    /// Largest representable value strictly less than `self`.
    fn pred(self) -> Self;
    /// Largest value of `Self` that is `<= x`.
    fn from_f64_down(x: f64) -> Self;
    /// Smallest value of `Self` that is `>= x`.
    fn from_f64_up(x: f64) -> Self;
    /// Lossless widening to `f64`.
    fn to_f64_exact(self) -> f64;
    /// Magnitude below which product/quotient rounding errors may not be
    /// exactly representable (gradual underflow).
    fn underflow_guard() -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn succ(self) -> Self {
        self.next_up()
    }
    #[inline]
    fn pred(self) -> Self {
        self.next_down()
    }
    #[inline]
    fn from_f64_down(x: f64) -> Self {
        x
    }
    #[inline]
    fn from_f64_up(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64_exact(self) -> f64 {
        self
    }
    #[inline]
    fn underflow_guard() -> Self {
        1e-290
    }
}

impl Scalar for f32 {
    #[inline]
    fn succ(self) -> Self {
        self.next_up()
    }
    #[inline]
    fn pred(self) -> Self {
        self.next_down()
    }
    fn from_f64_down(x: f64) -> Self {
        let y = x as f32;
        if (y as f64) > x {
            y.next_down()
        } else {
            y
        }
    }
    fn from_f64_up(x: f64) -> Self {
        let y = x as f32;
        if (y as f64) < x {
            y.next_up()
        } else {
            y
        }
    }
    #[inline]
    fn to_f64_exact(self) -> f64 {
        self as f64
    }
    #[inline]
    fn underflow_guard() -> Self {
        1e-30
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directed_f32_conversion_brackets_the_literal() {
        for &x in &[0.1, 4.4142, -2.3163, 1e-7, 19.6] {
            let lo = f32::from_f64_down(x) as f64;
            let hi = f32::from_f64_up(x) as f64;
            assert!(lo <= x && x <= hi, "{x}: [{lo}, {hi}]");
        }
        assert_eq!(f32::from_f64_down(0.5), 0.5);
        assert_eq!(f32::from_f64_up(0.5), 0.5);
    }
}
