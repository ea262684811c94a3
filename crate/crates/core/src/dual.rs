//! Forward-mode derivative numbers.
//!
//! [`Dual1`] carries a value and its gradient, [`Dual2`] additionally the
//! Hessian (packed upper triangle, so symmetry holds by construction). Both
//! are generic over the underlying [`Number`], which gives point derivatives
//! (`Dual2<f64>`), derivative enclosures (`Dual2<Interval<f64>>`) and, by
//! nesting, third-order information (`Dual2<Dual1<Interval<f64>>>`).
//!
//! An empty gradient denotes a constant; all operations treat missing
//! entries as zero.

use std::cmp::Ordering;

use smallvec::SmallVec;

use crate::number::{DomainError, Number};

pub type Grad<N> = SmallVec<[N; 2]>;
pub type PackedHess<N> = SmallVec<[N; 3]>;

/// Index of `(i, j)`, `i <= j`, in a packed upper triangle of an `n×n` matrix.
#[inline]
pub fn packed_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * (2 * n - i - 1) / 2 + j
}

#[inline]
pub fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Elementary {
    Sin,
    Cos,
    Tanh,
    Exp,
    Sqrt,
    Recip,
    Powi(i32),
}

/// `(φ(v), φ'(v), φ''(v))`; the second derivative is only formed when asked.
pub(crate) fn elementary<N: Number>(e: Elementary, v: &N, second: bool) -> Result<(N, N, Option<N>), DomainError> {
    Ok(match e {
        Elementary::Sin => {
            let s = v.sin();
            let d2 = second.then(|| s.neg());
            (s, v.cos(), d2)
        }
        Elementary::Cos => {
            let c = v.cos();
            let d2 = second.then(|| c.neg());
            (c, v.sin().neg(), d2)
        }
        Elementary::Tanh => {
            let t = v.tanh();
            let d1 = N::constant(1.0).sub(&t.powi(2)?);
            let d2 = second.then(|| t.mul(&d1).scale(-2.0));
            (t, d1, d2)
        }
        Elementary::Exp => {
            let e = v.exp()?;
            (e.clone(), e.clone(), second.then_some(e))
        }
        Elementary::Sqrt => {
            let s = v.sqrt()?;
            let rs = s.recip()?;
            let d2 = if second { Some(rs.powi(3)?.scale(-0.25)) } else { None };
            (s, rs.scale(0.5), d2)
        }
        Elementary::Recip => {
            let q = v.recip()?;
            let d1 = q.powi(2)?.neg();
            let d2 = if second { Some(q.powi(3)?.scale(2.0)) } else { None };
            (q, d1, d2)
        }
        Elementary::Powi(k) => match k {
            0 => (N::constant(1.0), N::constant(0.0), second.then(|| N::constant(0.0))),
            1 => (v.clone(), N::constant(1.0), second.then(|| N::constant(0.0))),
            2 => (v.powi(2)?, v.scale(2.0), second.then(|| N::constant(2.0))),
            _ => {
                let d2 = if second {
                    Some(v.powi(k - 2)?.scale(f64::from(k) * f64::from(k - 1)))
                } else {
                    None
                };
                (v.powi(k)?, v.powi(k - 1)?.scale(f64::from(k)), d2)
            }
        },
    })
}

// ---------------------------------------------------------------------------

/// Value and gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Dual1<N> {
    pub v: N,
    pub g: Grad<N>,
}

impl<N: Number> Dual1<N> {
    pub fn constant_of(v: N) -> Self {
        Self { v, g: Grad::new() }
    }

    /// Independent variable `i` of `n`.
    pub fn variable(v: N, i: usize, n: usize) -> Self {
        let mut g: Grad<N> = (0..n).map(|_| N::constant(0.0)).collect();
        g[i] = N::constant(1.0);
        Self { v, g }
    }

    pub fn is_constant(&self) -> bool {
        self.g.is_empty()
    }

    pub fn grad(&self, i: usize) -> N {
        self.g.get(i).cloned().unwrap_or_else(|| N::constant(0.0))
    }

    fn chain(&self, e: Elementary) -> Result<Self, DomainError> {
        let (f0, f1, _) = elementary(e, &self.v, false)?;
        Ok(Self {
            v: f0,
            g: self.g.iter().map(|gi| f1.mul(gi)).collect(),
        })
    }

    fn zip_grad(a: &Grad<N>, b: &Grad<N>, f: impl Fn(&N, &N) -> N, neg_b: bool) -> Grad<N> {
        match (a.is_empty(), b.is_empty()) {
            (true, true) => Grad::new(),
            (false, true) => a.clone(),
            (true, false) => {
                if neg_b {
                    b.iter().map(|x| x.neg()).collect()
                } else {
                    b.clone()
                }
            }
            (false, false) => a.iter().zip(b).map(|(x, y)| f(x, y)).collect(),
        }
    }
}

impl<N: Number> Number for Dual1<N> {
    fn constant(c: f64) -> Self {
        Self::constant_of(N::constant(c))
    }
    fn add(&self, o: &Self) -> Self {
        Self {
            v: self.v.add(&o.v),
            g: Self::zip_grad(&self.g, &o.g, |x, y| x.add(y), false),
        }
    }
    fn sub(&self, o: &Self) -> Self {
        Self {
            v: self.v.sub(&o.v),
            g: Self::zip_grad(&self.g, &o.g, |x, y| x.sub(y), true),
        }
    }
    fn mul(&self, o: &Self) -> Self {
        let v = self.v.mul(&o.v);
        let g = match (self.is_constant(), o.is_constant()) {
            (true, true) => Grad::new(),
            (true, false) => o.g.iter().map(|x| self.v.mul(x)).collect(),
            (false, true) => self.g.iter().map(|x| o.v.mul(x)).collect(),
            (false, false) => self
                .g
                .iter()
                .zip(&o.g)
                .map(|(ga, gb)| self.v.mul(gb).add(&o.v.mul(ga)))
                .collect(),
        };
        Self { v, g }
    }
    fn neg(&self) -> Self {
        Self {
            v: self.v.neg(),
            g: self.g.iter().map(|x| x.neg()).collect(),
        }
    }
    fn scale(&self, c: f64) -> Self {
        Self {
            v: self.v.scale(c),
            g: self.g.iter().map(|x| x.scale(c)).collect(),
        }
    }
    fn recip(&self) -> Result<Self, DomainError> {
        self.chain(Elementary::Recip)
    }
    fn powi(&self, k: i32) -> Result<Self, DomainError> {
        self.chain(Elementary::Powi(k))
    }
    fn sqrt(&self) -> Result<Self, DomainError> {
        self.chain(Elementary::Sqrt)
    }
    fn exp(&self) -> Result<Self, DomainError> {
        self.chain(Elementary::Exp)
    }
    fn sin(&self) -> Self {
        self.chain(Elementary::Sin).expect("sin is total")
    }
    fn cos(&self) -> Self {
        self.chain(Elementary::Cos).expect("cos is total")
    }
    fn tanh(&self) -> Self {
        self.chain(Elementary::Tanh).expect("tanh is total")
    }
    fn certainly(&self, o: &Self) -> Option<Ordering> {
        self.v.certainly(&o.v)
    }
    fn hull(&self, o: &Self) -> Self {
        let n = self.g.len().max(o.g.len());
        Self {
            v: self.v.hull(&o.v),
            g: (0..n).map(|i| self.grad(i).hull(&o.grad(i))).collect(),
        }
    }
}

// ---------------------------------------------------------------------------

/// Value, gradient and symmetric Hessian.
#[derive(Clone, Debug, PartialEq)]
pub struct Dual2<N> {
    pub v: N,
    pub g: Grad<N>,
    /// Packed upper triangle, row major; empty together with `g`.
    pub h: PackedHess<N>,
}

impl<N: Number> Dual2<N> {
    pub fn constant_of(v: N) -> Self {
        Self {
            v,
            g: Grad::new(),
            h: PackedHess::new(),
        }
    }

    /// Independent variable `i` of `n` with value `v`.
    pub fn variable(v: N, i: usize, n: usize) -> Self {
        let mut g: Grad<N> = (0..n).map(|_| N::constant(0.0)).collect();
        g[i] = N::constant(1.0);
        Self {
            v,
            g,
            h: (0..packed_len(n)).map(|_| N::constant(0.0)).collect(),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.g.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn value(&self) -> &N {
        &self.v
    }

    pub fn grad(&self, i: usize) -> N {
        self.g.get(i).cloned().unwrap_or_else(|| N::constant(0.0))
    }

    pub fn hess(&self, i: usize, j: usize) -> N {
        if self.is_constant() {
            return N::constant(0.0);
        }
        self.h[packed_index(self.g.len(), i, j)].clone()
    }

    /// Gradient as a dense vector of length `n`.
    pub fn gradient(&self, n: usize) -> Vec<N> {
        (0..n).map(|i| self.grad(i)).collect()
    }

    /// Hessian as a dense row-major `n×n` matrix.
    pub fn hessian(&self, n: usize) -> Vec<N> {
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.hess(i, j));
            }
        }
        out
    }

    fn chain(&self, e: Elementary) -> Result<Self, DomainError> {
        if self.is_constant() {
            let (f0, _, _) = elementary(e, &self.v, false)?;
            return Ok(Self::constant_of(f0));
        }
        let (f0, f1, f2) = elementary(e, &self.v, true)?;
        let f2 = f2.expect("second derivative requested");
        let n = self.g.len();
        let g: Grad<N> = self.g.iter().map(|gi| f1.mul(gi)).collect();
        let mut h = PackedHess::with_capacity(self.h.len());
        let mut k = 0;
        for i in 0..n {
            let f2gi = f2.mul(&self.g[i]);
            for j in i..n {
                h.push(f1.mul(&self.h[k]).add(&f2gi.mul(&self.g[j])));
                k += 1;
            }
        }
        Ok(Self { v: f0, g, h })
    }

    fn combine(&self, o: &Self, sign: f64) -> Self {
        let v = if sign > 0.0 { self.v.add(&o.v) } else { self.v.sub(&o.v) };
        let lift = |x: &N| if sign > 0.0 { x.clone() } else { x.neg() };
        match (self.is_constant(), o.is_constant()) {
            (true, true) => Self::constant_of(v),
            (false, true) => Self {
                v,
                g: self.g.clone(),
                h: self.h.clone(),
            },
            (true, false) => Self {
                v,
                g: o.g.iter().map(lift).collect(),
                h: o.h.iter().map(lift).collect(),
            },
            (false, false) => {
                let op = |x: &N, y: &N| if sign > 0.0 { x.add(y) } else { x.sub(y) };
                Self {
                    v,
                    g: self.g.iter().zip(&o.g).map(|(x, y)| op(x, y)).collect(),
                    h: self.h.iter().zip(&o.h).map(|(x, y)| op(x, y)).collect(),
                }
            }
        }
    }
}

impl<N: Number> Number for Dual2<N> {
    fn constant(c: f64) -> Self {
        Self::constant_of(N::constant(c))
    }
    fn add(&self, o: &Self) -> Self {
        self.combine(o, 1.0)
    }
    fn sub(&self, o: &Self) -> Self {
        self.combine(o, -1.0)
    }
    fn mul(&self, o: &Self) -> Self {
        let v = self.v.mul(&o.v);
        match (self.is_constant(), o.is_constant()) {
            (true, true) => Self::constant_of(v),
            (true, false) => Self {
                v,
                g: o.g.iter().map(|x| self.v.mul(x)).collect(),
                h: o.h.iter().map(|x| self.v.mul(x)).collect(),
            },
            (false, true) => Self {
                v,
                g: self.g.iter().map(|x| o.v.mul(x)).collect(),
                h: self.h.iter().map(|x| o.v.mul(x)).collect(),
            },
            (false, false) => {
                let n = self.g.len();
                let g = self
                    .g
                    .iter()
                    .zip(&o.g)
                    .map(|(ga, gb)| self.v.mul(gb).add(&o.v.mul(ga)))
                    .collect();
                let mut h = PackedHess::with_capacity(self.h.len());
                let mut k = 0;
                for i in 0..n {
                    for j in i..n {
                        let cross = self.g[i].mul(&o.g[j]).add(&self.g[j].mul(&o.g[i]));
                        h.push(self.v.mul(&o.h[k]).add(&o.v.mul(&self.h[k])).add(&cross));
                        k += 1;
                    }
                }
                Self { v, g, h }
            }
        }
    }
    fn neg(&self) -> Self {
        Self {
            v: self.v.neg(),
            g: self.g.iter().map(|x| x.neg()).collect(),
            h: self.h.iter().map(|x| x.neg()).collect(),
        }
    }
    fn scale(&self, c: f64) -> Self {
        Self {
            v: self.v.scale(c),
            g: self.g.iter().map(|x| x.scale(c)).collect(),
            h: self.h.iter().map(|x| x.scale(c)).collect(),
        }
    }
    fn recip(&self) -> Result<Self, DomainError> {
        self.chain(Elementary::Recip)
    }
    fn powi(&self, k: i32) -> Result<Self, DomainError> {
        self.chain(Elementary::Powi(k))
    }
    fn sqrt(&self) -> Result<Self, DomainError> {
        self.chain(Elementary::Sqrt)
    }
    fn exp(&self) -> Result<Self, DomainError> {
        self.chain(Elementary::Exp)
    }
    fn sin(&self) -> Self {
        self.chain(Elementary::Sin).expect("sin is total")
    }
    fn cos(&self) -> Self {
        self.chain(Elementary::Cos).expect("cos is total")
    }
    fn tanh(&self) -> Self {
        self.chain(Elementary::Tanh).expect("tanh is total")
    }
    fn certainly(&self, o: &Self) -> Option<Ordering> {
        self.v.certainly(&o.v)
    }
    fn hull(&self, o: &Self) -> Self {
        let n = self.g.len().max(o.g.len());
        let zero_h = |d: &Self, k: usize| {
            if d.is_constant() {
                N::constant(0.0)
            } else {
                d.h[k].clone()
            }
        };
        Self {
            v: self.v.hull(&o.v),
            g: (0..n).map(|i| self.grad(i).hull(&o.grad(i))).collect(),
            h: if n == 0 {
                PackedHess::new()
            } else {
                (0..packed_len(n))
                    .map(|k| zero_h(self, k).hull(&zero_h(o, k)))
                    .collect()
            },
        }
    }
}
