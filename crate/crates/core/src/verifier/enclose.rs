//! Range enclosures of tape outputs over boxes.
//!
//! The natural interval extension is intersected with Taylor forms up to
//! third order, centred at the box midpoint and, for boxes containing it, at
//! the origin. The origin forms are what make goals that vanish to second
//! order at the origin provable on boxes touching it. Goals built from
//! trained networks are small sums of large terms, so the higher-order forms
//! pay for themselves by cutting the number of boxes.

use crate::dual::{packed_index, Dual1, Dual2};
use crate::expr::{EvalError, Tape};
use crate::interval::{Interval, IntervalBox};
use crate::scalar::Scalar;

/// Reusable evaluation buffers, one per number type.
pub(crate) struct Scratch<T> {
    iv: Vec<Interval<T>>,
    d2: Vec<Dual2<Interval<T>>>,
    d3: Vec<Dual2<Dual1<Interval<T>>>>,
    p2: Vec<Dual2<f64>>,
    d4: Vec<Dual2<Dual2<Interval<T>>>>,
}

impl<T: Scalar> Scratch<T> {
    pub(crate) fn new() -> Self {
        Self {
            iv: Vec::new(),
            d2: Vec::new(),
            d3: Vec::new(),
            p2: Vec::new(),
            d4: Vec::new(),
        }
    }
}

pub(crate) struct Encloser<T> {
    pub tape: Tape,
    pub n: usize,
    smooth: bool,
    /// Value, gradient and Hessian enclosures at the origin, when defined there.
    origin: Option<Vec<Dual2<Interval<T>>>>,
}

fn half<T: Scalar>() -> Interval<T> {
    Interval::from_f64(0.5)
}

/// `Σᵢ ½Hᵢᵢ dᵢ² + Σ_{i<j} Hᵢⱼ dᵢ dⱼ`.
fn quadratic_term<T: Scalar>(h: &[Interval<T>], d: &[Interval<T>]) -> Interval<T> {
    let n = d.len();
    let mut acc = Interval::point(T::zero());
    for i in 0..n {
        acc = acc.add(&half::<T>().mul(&h[packed_index(n, i, i)]).mul(&d[i].sqr()));
        for j in i + 1..n {
            acc = acc.add(&h[packed_index(n, i, j)].mul(&d[i].mul(&d[j])));
        }
    }
    acc
}

fn linear_term<T: Scalar>(g: &[Interval<T>], d: &[Interval<T>]) -> Interval<T> {
    g.iter()
        .zip(d)
        .fold(Interval::point(T::zero()), |acc, (gi, di)| acc.add(&gi.mul(di)))
}

fn grad_of<N: crate::number::Number>(g: &[N], n: usize) -> Vec<N> {
    (0..n)
        .map(|i| g.get(i).cloned().unwrap_or_else(|| N::constant(0.0)))
        .collect()
}

fn hess_of<T: Scalar>(d: &Dual2<Interval<T>>, n: usize) -> Vec<Interval<T>> {
    if d.is_constant() {
        vec![Interval::point(T::zero()); n * (n + 1) / 2]
    } else {
        d.h.to_vec()
    }
}

impl<T: Scalar> Encloser<T> {
    pub(crate) fn new(tape: Tape) -> Self {
        let n = tape.dim();
        let smooth = tape.is_smooth();
        let origin = IntervalBox::point(&vec![T::zero(); n]);
        let origin = tape
            .eval_with(&Tape::interval_dual2_vars(&origin), &mut Vec::new())
            .ok();
        Self {
            tape,
            n,
            smooth,
            origin,
        }
    }

    pub(crate) fn natural(&self, b: &IntervalBox<T>, s: &mut Scratch<T>) -> Result<Vec<Interval<T>>, EvalError> {
        self.tape.eval_with(b.sides(), &mut s.iv)
    }

    pub(crate) fn at_point(&self, x: &[T], s: &mut Scratch<T>) -> Result<Vec<Interval<T>>, EvalError> {
        let sides: Vec<Interval<T>> = x.iter().map(|&v| Interval::point(v)).collect();
        self.tape.eval_with(&sides, &mut s.iv)
    }

    /// Frobenius norm of the Hessian of output `o` at `x`, in plain floating
    /// point. Only used to steer the search.
    pub(crate) fn hessian_norm_estimate(&self, o: usize, x: &[T], s: &mut Scratch<T>) -> Option<f64> {
        let n = self.n;
        let vars: Vec<Dual2<f64>> = (0..n).map(|i| Dual2::variable(x[i].to_f64_exact(), i, n)).collect();
        let d = self.tape.eval_with(&vars, &mut s.p2).ok()?;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += d[o].hess(i, j).powi(2);
            }
        }
        Some(acc.sqrt())
    }

    /// Packed Hessian enclosures of output `o` over `b`.
    pub(crate) fn hessian(&self, o: usize, b: &IntervalBox<T>, s: &mut Scratch<T>) -> Option<Vec<Interval<T>>> {
        let over = self.tape.eval_with(&Tape::interval_dual2_vars(b), &mut s.d2).ok()?;
        Some(hess_of(&over[o], self.n))
    }
}

/// `Σ_{i,j,k} Tᵢⱼₖ dᵢ dⱼ dₖ / 6` from packed second derivatives whose
/// gradients hold the third derivatives.
fn cubic_term<T: Scalar>(t: &Dual2<Dual1<Interval<T>>>, d: &[Interval<T>]) -> Interval<T> {
    let n = d.len();
    let mut acc = Interval::point(T::zero());
    if t.is_constant() {
        return acc;
    }
    let sixth = Interval::<T>::from_f64(1.0)
        .div(&Interval::from_f64(6.0))
        .expect("nonzero");
    for i in 0..n {
        for j in i..n {
            let e = &t.h[packed_index(n, i, j)];
            let inner = linear_term(&grad_of(&e.g, n), d);
            let mult = if i == j { sixth } else { sixth.add(&sixth) };
            acc = acc.add(&mult.mul(&d[i].mul(&d[j])).mul(&inner));
        }
    }
    acc
}

impl<T: Scalar> Encloser<T> {
    /// Natural extension intersected with mean-value, second- and third-order
    /// Taylor forms, all built from one third-order evaluation over the box
    /// and a second-order one at its midpoint. Forms centred at the origin
    /// are added when the box contains it.
    pub(crate) fn taylor3(&self, b: &IntervalBox<T>, nat: &[Interval<T>], s: &mut Scratch<T>) -> Vec<Interval<T>> {
        if !self.smooth {
            return nat.to_vec();
        }
        let n = self.n;
        let Ok(over) = self.tape.eval_with(&Tape::interval_dual3_vars(b), &mut s.d3) else {
            return nat.to_vec();
        };
        let m = b.mid();
        let at_mid = self
            .tape
            .eval_with(&Tape::interval_dual2_vars(&IntervalBox::point(&m)), &mut s.d2)
            .ok();
        let d: Vec<Interval<T>> = b
            .sides()
            .iter()
            .zip(&m)
            .map(|(side, &mi)| side.sub(&Interval::point(mi)))
            .collect();
        let use_origin = b.contains_origin() && self.origin.is_some();
        let mut out = Vec::with_capacity(nat.len());
        for (o, base) in nat.iter().enumerate() {
            let mut enc = *base;
            let t = &over[o];
            let gb: Vec<Interval<T>> = (0..n).map(|i| t.grad(i).v).collect();
            let hb: Vec<Interval<T>> = if t.is_constant() {
                vec![Interval::point(T::zero()); n * (n + 1) / 2]
            } else {
                t.h.iter().map(|e| e.v).collect()
            };
            let cubic = cubic_term(t, &d);
            if let Some(mid) = &at_mid {
                let fm = mid[o].v;
                let gm = grad_of(&mid[o].g, n);
                let hm = hess_of(&mid[o], n);
                let mv = fm.add(&linear_term(&gb, &d));
                let lin = fm.add(&linear_term(&gm, &d));
                let t2 = lin.add(&quadratic_term(&hb, &d));
                let t3 = lin.add(&quadratic_term(&hm, &d)).add(&cubic);
                for form in [mv, t2, t3] {
                    enc = enc.intersect(&form).unwrap_or(enc);
                }
            }
            if use_origin {
                let z = &self.origin.as_ref().unwrap()[o];
                let x = b.sides();
                let lin = z.v.add(&linear_term(&grad_of(&z.g, n), x));
                let t2 = lin.add(&quadratic_term(&hb, x));
                let t3 = lin.add(&quadratic_term(&hess_of(z, n), x)).add(&cubic_term(t, x));
                for form in [t2, t3] {
                    enc = enc.intersect(&form).unwrap_or(enc);
                }
            }
            out.push(enc);
        }
        out
    }

    /// Hessian enclosure from a second-order Taylor form of each entry:
    /// `H(m) + ∂H(m)·d + ½ dᵀ ∂²H(B) d` with `d = B − m`, intersected with
    /// the natural enclosure. Converges quadratically in the box width, which
    /// matters when the Hessian is a small sum of large terms.
    pub(crate) fn hessian_taylor(&self, o: usize, b: &IntervalBox<T>, s: &mut Scratch<T>) -> Option<Vec<Interval<T>>> {
        let n = self.n;
        let vars: Vec<Dual2<Dual2<Interval<T>>>> = b
            .sides()
            .iter()
            .enumerate()
            .map(|(i, &side)| Dual2::variable(Dual2::variable(side, i, n), i, n))
            .collect();
        let over = self.tape.eval_with(&vars, &mut s.d4).ok()?;
        let len = n * (n + 1) / 2;
        if over[o].is_constant() {
            return Some(vec![Interval::point(T::zero()); len]);
        }
        let m = b.mid();
        let at_mid = self
            .tape
            .eval_with(&Tape::interval_dual3_vars(&IntervalBox::point(&m)), &mut s.d3)
            .ok()?;
        let d: Vec<Interval<T>> = b
            .sides()
            .iter()
            .zip(&m)
            .map(|(side, &mi)| side.sub(&Interval::point(mi)))
            .collect();
        let mid_const = at_mid[o].is_constant();
        let mut out = Vec::with_capacity(len);
        for p in 0..len {
            let entry = &over[o].h[p];
            let nat = entry.v;
            let (hm, gm) = if mid_const {
                (Interval::point(T::zero()), Vec::new())
            } else {
                let e = &at_mid[o].h[p];
                (e.v, grad_of(&e.g, n))
            };
            let gm = if gm.is_empty() {
                vec![Interval::point(T::zero()); n]
            } else {
                gm
            };
            let t2 = hm
                .add(&linear_term(&gm, &d))
                .add(&quadratic_term(&hess_of(entry, n), &d));
            out.push(nat.intersect(&t2).unwrap_or(nat));
        }
        Some(out)
    }
}

/// Upper bound on `‖H‖_F²` for a packed symmetric enclosure.
pub(crate) fn frobenius_sq_up<T: Scalar>(h: &[Interval<T>], n: usize) -> T {
    let mut acc = Interval::point(T::zero());
    for i in 0..n {
        for j in 0..n {
            let m = Interval::point(h[packed_index(n, i, j)].mag());
            acc = acc.add(&m.sqr());
        }
    }
    acc.hi()
}

/// Lower bound on `‖H‖_F²`.
pub(crate) fn frobenius_sq_down<T: Scalar>(h: &[Interval<T>], n: usize) -> T {
    let mut acc = Interval::point(T::zero());
    for i in 0..n {
        for j in 0..n {
            let m = Interval::point(h[packed_index(n, i, j)].mig());
            acc = acc.add(&m.sqr());
        }
    }
    acc.lo()
}

/// Whether every symmetric matrix in the packed enclosure is positive
/// definite, by interval Cholesky factorization.
pub(crate) fn interval_cholesky_pd<T: Scalar>(h: &[Interval<T>], n: usize) -> bool {
    let mut l = vec![Interval::point(T::zero()); n * n];
    for j in 0..n {
        let mut d = h[packed_index(n, j, j)];
        for k in 0..j {
            d = d.sub(&l[j * n + k].sqr());
        }
        if !(d.lo() > T::zero()) {
            return false;
        }
        let Ok(ljj) = d.sqrt() else { return false };
        l[j * n + j] = ljj;
        for i in j + 1..n {
            let mut v = h[packed_index(n, i, j)];
            for k in 0..j {
                v = v.sub(&l[i * n + k].mul(&l[j * n + k]));
            }
            match v.div(&ljj) {
                Ok(q) => l[i * n + j] = q,
                Err(_) => return false,
            }
        }
    }
    true
}
