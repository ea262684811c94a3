//! Closed intervals and axis-aligned boxes with outward-rounded arithmetic.
//!
//! Every endpoint is rounded in the safe direction. Sums and products use
//! error-free transformations (TwoSum, FMA) to detect whether the floating
//! point result was exact; inexact endpoints are moved one ULP outward.
//! Library transcendentals are not correctly rounded, so their endpoints are
//! moved two ULPs outward unless the argument is an exact special point.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::number::DomainError;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    lo: T,
    hi: T,
}

// ---------------------------------------------------------------------------
// directed rounding helpers

#[inline]
fn two_sum<T: Scalar>(a: T, b: T) -> (T, T) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
pub(crate) fn add_down<T: Scalar>(a: T, b: T) -> T {
    let (s, e) = two_sum(a, b);
    if e < T::zero() || !e.is_finite() {
        s.pred()
    } else {
        s
    }
}

#[inline]
pub(crate) fn add_up<T: Scalar>(a: T, b: T) -> T {
    let (s, e) = two_sum(a, b);
    if e > T::zero() || !e.is_finite() {
        s.succ()
    } else {
        s
    }
}

/// Rounding error of `a*b`, or `None` when it cannot be trusted (underflow).
#[inline]
fn mul_err<T: Scalar>(a: T, b: T, p: T) -> Option<T> {
    if p.abs() < T::underflow_guard() && a != T::zero() && b != T::zero() {
        return None;
    }
    Some(a.mul_add(b, -p))
}

#[inline]
pub(crate) fn mul_down<T: Scalar>(a: T, b: T) -> T {
    let p = a * b;
    match mul_err(a, b, p) {
        Some(e) if e >= T::zero() => p,
        _ => p.pred(),
    }
}

#[inline]
pub(crate) fn mul_up<T: Scalar>(a: T, b: T) -> T {
    let p = a * b;
    match mul_err(a, b, p) {
        Some(e) if e <= T::zero() => p,
        _ => p.succ(),
    }
}

/// Lower and upper bound of `1/x` for `x != 0`.
#[inline]
fn recip_bounds<T: Scalar>(x: T) -> (T, T) {
    let q = T::one() / x;
    if q.abs() < T::underflow_guard() {
        return (q.pred(), q.succ());
    }
    // residual = q*x - 1; sign tells whether q overshoots 1/x
    let res = q.mul_add(x, -T::one());
    if res == T::zero() {
        (q, q)
    } else if (res > T::zero()) == (x > T::zero()) {
        (q.pred(), q)
    } else {
        (q, q.succ())
    }
}

fn sqrt_bounds<T: Scalar>(x: T) -> (T, T) {
    let s = x.sqrt();
    if s == T::zero() {
        return (s, s);
    }
    let res = s.mul_add(s, -x);
    if res == T::zero() {
        (s, s)
    } else if res > T::zero() {
        (s.pred(), s)
    } else {
        (s, s.succ())
    }
}

/// `x^k` for `x >= 0`, rounded down (`up == false`) or up.
fn pow_nonneg<T: Scalar>(x: T, k: u32, up: bool) -> T {
    let mut acc = T::one();
    let mut base = x;
    let mut e = k;
    while e > 0 {
        if e & 1 == 1 {
            acc = if up { mul_up(acc, base) } else { mul_down(acc, base) };
        }
        e >>= 1;
        if e > 0 {
            base = if up { mul_up(base, base) } else { mul_down(base, base) };
        }
    }
    acc
}

#[inline]
fn widen2_down(v: f64) -> f64 {
    v.next_down().next_down()
}

#[inline]
fn widen2_up(v: f64) -> f64 {
    v.next_up().next_up()
}

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Whether `phase + 2kπ` lies in `[lo, hi]` for some integer k, with a slack
/// that only ever answers "yes" too often.
fn hits_phase(lo: f64, hi: f64, phase: f64) -> bool {
    let slack = 1e-14 * (1.0 + lo.abs().max(hi.abs()));
    let k = ((lo - slack - phase) / TWO_PI).ceil();
    [k - 1.0, k, k + 1.0].iter().any(|&kk| {
        let p = phase + kk * TWO_PI;
        p >= lo - slack && p <= hi + slack
    })
}

/// Range of sin (`cosine == false`) or cos over `[lo, hi]` in binary64.
fn trig_range(lo: f64, hi: f64, cosine: bool) -> (f64, f64) {
    if hi - lo >= TWO_PI || lo.abs() > 1e8 || hi.abs() > 1e8 {
        return (-1.0, 1.0);
    }
    let f = |x: f64| if cosine { x.cos() } else { x.sin() };
    let (max_phase, min_phase) = if cosine {
        (0.0, std::f64::consts::PI)
    } else {
        (std::f64::consts::FRAC_PI_2, -std::f64::consts::FRAC_PI_2)
    };
    let (flo, fhi) = (f(lo), f(hi));
    let exact = |x: f64| x == 0.0;
    let end_lo = |x: f64, v: f64| if exact(x) { v } else { widen2_down(v) };
    let end_hi = |x: f64, v: f64| if exact(x) { v } else { widen2_up(v) };
    let mut rlo = end_lo(lo, flo).min(end_lo(hi, fhi));
    let mut rhi = end_hi(lo, flo).max(end_hi(hi, fhi));
    if hits_phase(lo, hi, max_phase) {
        rhi = 1.0;
    }
    if hits_phase(lo, hi, min_phase) {
        rlo = -1.0;
    }
    (rlo.max(-1.0), rhi.min(1.0))
}

// ---------------------------------------------------------------------------

impl<T: Scalar> Interval<T> {
    /// Builds `[lo, hi]`; fails on inverted or non-finite endpoints.
    pub fn new(lo: T, hi: T) -> Result<Self, DomainError> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(DomainError::NonFinite("interval endpoint"));
        }
        if lo > hi {
            return Err(DomainError::Inverted);
        }
        Ok(Self { lo, hi })
    }

    #[inline]
    pub(crate) fn raw(lo: T, hi: T) -> Self {
        debug_assert!(!(lo > hi), "inverted interval [{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn point(x: T) -> Self {
        Self { lo: x, hi: x }
    }

    /// Tightest enclosure of a binary64 literal.
    pub fn from_f64(c: f64) -> Self {
        Self {
            lo: T::from_f64_down(c),
            hi: T::from_f64_up(c),
        }
    }

    #[inline]
    pub fn lo(&self) -> T {
        self.lo
    }
    #[inline]
    pub fn hi(&self) -> T {
        self.hi
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }

    pub fn mid(&self) -> T {
        let m = self.lo + (self.hi - self.lo) * T::from_f64(0.5).unwrap();
        m.max(self.lo).min(self.hi)
    }

    /// Largest absolute value.
    pub fn mag(&self) -> T {
        self.lo.abs().max(self.hi.abs())
    }

    /// Smallest absolute value.
    pub fn mig(&self) -> T {
        if self.contains_zero() {
            T::zero()
        } else {
            self.lo.abs().min(self.hi.abs())
        }
    }

    pub fn contains(&self, x: T) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.contains(T::zero())
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    /// `self ⊆ other`.
    pub fn subset_of(&self, other: &Self) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn hull(&self, o: &Self) -> Self {
        Self::raw(self.lo.min(o.lo), self.hi.max(o.hi))
    }

    /// Intersection; `None` when disjoint.
    pub fn intersect(&self, o: &Self) -> Option<Self> {
        let lo = self.lo.max(o.lo);
        let hi = self.hi.min(o.hi);
        (lo <= hi).then(|| Self::raw(lo, hi))
    }

    /// Definite ordering of every member of `self` against every member of `o`.
    pub fn certainly(&self, o: &Self) -> Option<Ordering> {
        if self.hi < o.lo {
            Some(Ordering::Less)
        } else if self.lo > o.hi {
            Some(Ordering::Greater)
        } else if self.is_point() && o.is_point() && self.lo == o.lo {
            Some(Ordering::Equal)
        } else {
            None
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::raw(add_down(self.lo, o.lo), add_up(self.hi, o.hi))
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self::raw(add_down(self.lo, -o.hi), add_up(self.hi, -o.lo))
    }

    pub fn neg(&self) -> Self {
        Self::raw(-self.hi, -self.lo)
    }

    pub fn mul(&self, o: &Self) -> Self {
        let z = T::zero();
        let (a, b, c, d) = (self.lo, self.hi, o.lo, o.hi);
        if a >= z && c >= z {
            return Self::raw(mul_down(a, c), mul_up(b, d));
        }
        if b <= z && d <= z {
            return Self::raw(mul_down(b, d), mul_up(a, c));
        }
        if a >= z && d <= z {
            return Self::raw(mul_down(b, c), mul_up(a, d));
        }
        if b <= z && c >= z {
            return Self::raw(mul_down(a, d), mul_up(b, c));
        }
        let lo = mul_down(a, c)
            .min(mul_down(a, d))
            .min(mul_down(b, c))
            .min(mul_down(b, d));
        let hi = mul_up(a, c).max(mul_up(a, d)).max(mul_up(b, c)).max(mul_up(b, d));
        Self::raw(lo, hi)
    }

    /// Product with `[lo, hi] ∋ 0`-free square semantics: `x*x` as an even power.
    pub fn sqr(&self) -> Self {
        let z = T::zero();
        if self.lo >= z {
            Self::raw(mul_down(self.lo, self.lo), mul_up(self.hi, self.hi))
        } else if self.hi <= z {
            Self::raw(mul_down(self.hi, self.hi), mul_up(self.lo, self.lo))
        } else {
            let m = self.mag();
            Self::raw(z, mul_up(m, m))
        }
    }

    pub fn recip(&self) -> Result<Self, DomainError> {
        if self.contains_zero() {
            return Err(DomainError::DivisionByZero);
        }
        let (_, up) = recip_bounds(self.lo);
        let (down, _) = recip_bounds(self.hi);
        Self::new(down, up)
    }

    pub fn div(&self, o: &Self) -> Result<Self, DomainError> {
        Ok(self.mul(&o.recip()?))
    }

    pub fn powi(&self, k: i32) -> Result<Self, DomainError> {
        if k == 0 {
            return Ok(Self::point(T::one()));
        }
        if k < 0 {
            return self.powi(-k)?.recip();
        }
        let k = k as u32;
        let z = T::zero();
        let r = if k.is_multiple_of(2) {
            if self.lo >= z {
                Self::raw(pow_nonneg(self.lo, k, false), pow_nonneg(self.hi, k, true))
            } else if self.hi <= z {
                Self::raw(pow_nonneg(-self.hi, k, false), pow_nonneg(-self.lo, k, true))
            } else {
                Self::raw(z, pow_nonneg(self.mag(), k, true))
            }
        } else {
            let lo = if self.lo >= z {
                pow_nonneg(self.lo, k, false)
            } else {
                -pow_nonneg(-self.lo, k, true)
            };
            let hi = if self.hi >= z {
                pow_nonneg(self.hi, k, true)
            } else {
                -pow_nonneg(-self.hi, k, false)
            };
            Self::raw(lo, hi)
        };
        Self::new(r.lo, r.hi)
    }

    pub fn sqrt(&self) -> Result<Self, DomainError> {
        if self.lo < T::zero() {
            return Err(DomainError::NegativeSqrt);
        }
        Ok(Self::raw(sqrt_bounds(self.lo).0, sqrt_bounds(self.hi).1))
    }

    fn from_f64_bounds(lo: f64, hi: f64) -> Result<Self, DomainError> {
        Self::new(T::from_f64_down(lo), T::from_f64_up(hi))
    }

    pub fn exp(&self) -> Result<Self, DomainError> {
        let (lo, hi) = (self.lo.to_f64_exact(), self.hi.to_f64_exact());
        let elo = if lo == 0.0 { 1.0 } else { widen2_down(lo.exp()).max(0.0) };
        let ehi = if hi == 0.0 { 1.0 } else { widen2_up(hi.exp()) };
        Self::from_f64_bounds(elo, ehi)
    }

    pub fn tanh(&self) -> Self {
        let (lo, hi) = (self.lo.to_f64_exact(), self.hi.to_f64_exact());
        let tlo = if lo == 0.0 {
            0.0
        } else {
            widen2_down(lo.tanh()).max(-1.0)
        };
        let thi = if hi == 0.0 { 0.0 } else { widen2_up(hi.tanh()).min(1.0) };
        Self::raw(T::from_f64_down(tlo), T::from_f64_up(thi))
    }

    pub fn sin(&self) -> Self {
        let (lo, hi) = trig_range(self.lo.to_f64_exact(), self.hi.to_f64_exact(), false);
        Self::raw(T::from_f64_down(lo), T::from_f64_up(hi))
    }

    pub fn cos(&self) -> Self {
        let (lo, hi) = trig_range(self.lo.to_f64_exact(), self.hi.to_f64_exact(), true);
        Self::raw(T::from_f64_down(lo), T::from_f64_up(hi))
    }

    pub fn min(&self, o: &Self) -> Self {
        Self::raw(self.lo.min(o.lo), self.hi.min(o.hi))
    }

    pub fn max(&self, o: &Self) -> Self {
        Self::raw(self.lo.max(o.lo), self.hi.max(o.hi))
    }

    /// Symmetric interval `[-r, r]`.
    pub fn symmetric(r: T) -> Self {
        Self::raw(-r.abs(), r.abs())
    }
}

impl<T: Scalar> fmt::Display for Interval<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:e}, {:e}]", self.lo, self.hi)
    }
}

/// Axis-aligned box `[lo₁,hi₁] × … × [loₙ,hiₙ]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalBox<T> {
    sides: Vec<Interval<T>>,
}

impl<T: Scalar> IntervalBox<T> {
    pub fn new(sides: Vec<Interval<T>>) -> Self {
        assert!(!sides.is_empty(), "box must have at least one dimension");
        Self { sides }
    }

    pub fn from_bounds(lo: &[T], hi: &[T]) -> Result<Self, DomainError> {
        assert_eq!(lo.len(), hi.len());
        let sides = lo
            .iter()
            .zip(hi)
            .map(|(&l, &h)| Interval::new(l, h))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(sides))
    }

    /// `[-r, r]ⁿ`.
    pub fn cube(n: usize, r: T) -> Self {
        Self::new(vec![Interval::symmetric(r); n])
    }

    pub fn point(x: &[T]) -> Self {
        Self::new(x.iter().map(|&v| Interval::point(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.sides.len()
    }

    pub fn sides(&self) -> &[Interval<T>] {
        &self.sides
    }

    pub fn side(&self, i: usize) -> Interval<T> {
        self.sides[i]
    }

    pub fn lo(&self) -> Vec<T> {
        self.sides.iter().map(|s| s.lo()).collect()
    }

    pub fn hi(&self) -> Vec<T> {
        self.sides.iter().map(|s| s.hi()).collect()
    }

    pub fn mid(&self) -> Vec<T> {
        self.sides.iter().map(|s| s.mid()).collect()
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim() && self.sides.iter().zip(x).all(|(s, &v)| s.contains(v))
    }

    pub fn contains_origin(&self) -> bool {
        self.sides.iter().all(|s| s.contains_zero())
    }

    /// Origin strictly inside every side.
    pub fn origin_in_interior(&self) -> bool {
        self.sides.iter().all(|s| s.lo() < T::zero() && s.hi() > T::zero())
    }

    pub fn subset_of(&self, other: &Self) -> bool {
        self.dim() == other.dim() && self.sides.iter().zip(&other.sides).all(|(a, b)| a.subset_of(b))
    }

    /// Widest dimension, ties broken towards the lowest index.
    pub fn widest_dim(&self) -> usize {
        let mut best = 0;
        for i in 1..self.dim() {
            if self.sides[i].width() > self.sides[best].width() {
                best = i;
            }
        }
        best
    }

    pub fn max_width(&self) -> T {
        self.sides[self.widest_dim()].width()
    }

    pub fn bisect(&self, dim: usize) -> (Self, Self) {
        let s = self.sides[dim];
        let m = s.mid();
        let mut left = self.clone();
        let mut right = self.clone();
        left.sides[dim] = Interval::raw(s.lo(), m);
        right.sides[dim] = Interval::raw(m, s.hi());
        (left, right)
    }

    /// Upper bound on `max ‖x‖²` over the box (rounded up).
    pub fn max_norm_sq_up(&self) -> T {
        self.sides
            .iter()
            .fold(T::zero(), |acc, s| add_up(acc, mul_up(s.mag(), s.mag())))
    }

    /// Lower bound on `min ‖x‖²` over the box (rounded down).
    pub fn min_norm_sq_down(&self) -> T {
        self.sides
            .iter()
            .fold(T::zero(), |acc, s| add_down(acc, mul_down(s.mig(), s.mig())))
    }

    /// Replaces side `i` with a degenerate side at `value`.
    pub fn with_fixed(&self, i: usize, value: T) -> Self {
        let mut b = self.clone();
        b.sides[i] = Interval::point(value);
        b
    }

    /// Converts a box of another scalar type, rounding outward.
    pub fn to_f64(&self) -> IntervalBox<f64> {
        IntervalBox::new(
            self.sides
                .iter()
                .map(|s| Interval::raw(s.lo().to_f64_exact(), s.hi().to_f64_exact()))
                .collect(),
        )
    }

    pub fn from_f64_box(b: &IntervalBox<f64>) -> Self {
        Self::new(
            b.sides()
                .iter()
                .map(|s| Interval::raw(T::from_f64_down(s.lo()), T::from_f64_up(s.hi())))
                .collect(),
        )
    }
}

impl<T: Scalar> fmt::Display for IntervalBox<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.sides.iter().enumerate() {
            if i > 0 {
                write!(f, " × ")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iv(lo: f64, hi: f64) -> Interval<f64> {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn exact_sums_are_not_widened() {
        let a = iv(2.0, 2.0);
        let b = iv(-2.0, -2.0);
        assert_eq!(a.add(&b), iv(0.0, 0.0));
        let c = iv(0.1, 0.1).add(&iv(0.2, 0.2));
        assert!(c.lo() < c.hi());
        assert!(c.contains(0.1 + 0.2));
    }

    #[test]
    fn even_power_over_zero() {
        let r = iv(-1.0, 1.0).powi(2).unwrap();
        assert_eq!(r, iv(0.0, 1.0));
        let r = iv(-2.0, 1.0).powi(3).unwrap();
        assert_eq!(r, iv(-8.0, 1.0));
    }

    #[test]
    fn recip_rejects_zero() {
        assert_eq!(iv(-1.0, 1.0).recip(), Err(DomainError::DivisionByZero));
        let r = iv(2.0, 4.0).recip().unwrap();
        assert_eq!(r, iv(0.25, 0.5));
        let r = iv(3.0, 3.0).recip().unwrap();
        assert!(r.contains(1.0 / 3.0) && r.lo() < r.hi());
    }

    #[test]
    fn sqrt_domain() {
        assert_eq!(iv(-0.1, 1.0).sqrt(), Err(DomainError::NegativeSqrt));
        assert_eq!(iv(4.0, 9.0).sqrt().unwrap(), iv(2.0, 3.0));
    }

    #[test]
    fn sin_quadrants() {
        let r = iv(0.0, std::f64::consts::PI).sin();
        assert_eq!(r.hi(), 1.0);
        assert!(r.lo() <= 0.0 && r.lo() > -1e-15);
        let r = iv(-4.0, -1.0).sin();
        assert_eq!(r.lo(), -1.0);
        let r = iv(0.0, 7.0).sin();
        assert_eq!(r, iv(-1.0, 1.0));
        let r = iv(2.0, 3.0).cos();
        assert!(r.contains(2f64.cos()) && r.contains(3f64.cos()));
        assert!(r.lo() > -1.0);
    }

    #[test]
    fn bisect_covers_parent() {
        let b = IntervalBox::from_bounds(&[-1.0, 0.0], &[1.0, 3.0]).unwrap();
        assert_eq!(b.widest_dim(), 1);
        let (l, r) = b.bisect(1);
        assert_eq!(l.side(1).hi(), r.side(1).lo());
        assert_eq!(l.side(1).lo(), 0.0);
        assert_eq!(r.side(1).hi(), 3.0);
    }

    proptest! {
        #[test]
        fn arithmetic_encloses_samples(
            a in -50.0f64..50.0, wa in 0.0f64..10.0,
            b in -50.0f64..50.0, wb in 0.0f64..10.0,
            ta in 0.0f64..=1.0, tb in 0.0f64..=1.0,
        ) {
            let x = iv(a, a + wa);
            let y = iv(b, b + wb);
            let px = a + ta * wa;
            let py = b + tb * wb;
            prop_assume!(x.contains(px) && y.contains(py));
            prop_assert!(x.add(&y).contains(px + py));
            prop_assert!(x.sub(&y).contains(px - py));
            prop_assert!(x.mul(&y).contains(px * py));
            prop_assert!(x.sqr().contains(px * px));
            prop_assert!(x.sin().contains(px.sin()));
            prop_assert!(x.cos().contains(px.cos()));
            prop_assert!(x.tanh().contains(px.tanh()));
            prop_assert!(x.powi(3).unwrap().contains(px.powi(3)));
            if !y.contains_zero() {
                prop_assert!(x.div(&y).unwrap().contains(px / py));
            }
            if a < 5.0 {
                prop_assert!(x.exp().unwrap().contains(px.exp()));
            }
        }

        #[test]
        fn f32_intervals_enclose_f64_truth(a in -3.0f64..3.0, w in 0.0f64..1.0, t in 0.0f64..=1.0) {
            let x: Interval<f32> = Interval::new(f32::from_f64_down(a), f32::from_f64_up(a + w)).unwrap();
            let p = x.lo() as f64 + t * (x.hi() as f64 - x.lo() as f64);
            let r = x.sin().mul(&x.tanh()).add(&x.sqr());
            let truth = p.sin() * p.tanh() + p * p;
            prop_assert!((r.lo() as f64) <= truth && truth <= r.hi() as f64);
        }
    }
}
