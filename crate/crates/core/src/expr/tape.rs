use std::collections::HashMap;

use thiserror::Error;

use super::{Expr, UnaryFn};
use crate::dual::{Dual1, Dual2};
use crate::interval::{Interval, IntervalBox};
use crate::number::{DomainError, Number};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("evaluation domain error: {0}")]
    Domain(#[from] DomainError),
    #[error("variable x{index} referenced but the expression is declared over {dim} variables")]
    VariableOutOfRange { index: usize, dim: usize },
    #[error("expected {expected} inputs, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Const(f64),
    Var(usize),
    Neg(u32),
    Sum(u32, u32),
    Product(u32, u32),
    Scale(f64, u32),
    Quotient(u32, u32),
    Pow(u32, i32),
    Unary(UnaryFn, u32),
    Min(u32, u32),
    Max(u32, u32),
}

#[derive(Hash, PartialEq, Eq)]
enum Key {
    Const(u64),
    Var(usize),
    Neg(u32),
    Sum(Vec<u32>),
    Product(Vec<u32>),
    Scale(u64, u32),
    Quotient(u32, u32),
    Pow(u32, i32),
    Unary(UnaryFn, u32),
    Min(u32, u32),
    Max(u32, u32),
}

/// A compiled, flattened form of one or more expressions.
///
/// Structurally identical subtrees are stored once, so expressions built by
/// repeating a subexpression (for example the hidden units of a network used
/// in several gradient components) are evaluated once per call. Evaluation
/// is generic over [`Number`]; the tape itself is immutable and `Sync`.
#[derive(Clone, Debug)]
pub struct Tape {
    ops: Vec<Op>,
    args: Vec<u32>,
    outputs: Vec<u32>,
    dim: usize,
    smooth: bool,
}

struct Builder {
    ops: Vec<Op>,
    args: Vec<u32>,
    seen: HashMap<Key, u32>,
    dim: usize,
}

impl Builder {
    fn intern(&mut self, key: Key, op: Op) -> u32 {
        if let Some(&slot) = self.seen.get(&key) {
            return slot;
        }
        let slot = self.ops.len() as u32;
        self.ops.push(op);
        self.seen.insert(key, slot);
        slot
    }

    fn list(&mut self, slots: &[u32]) -> (u32, u32) {
        let start = self.args.len() as u32;
        self.args.extend_from_slice(slots);
        (start, self.args.len() as u32)
    }

    fn add(&mut self, e: &Expr) -> Result<u32, EvalError> {
        Ok(match e {
            Expr::Const(c) => self.intern(Key::Const(c.to_bits()), Op::Const(*c)),
            Expr::Var(i) => {
                if *i >= self.dim {
                    return Err(EvalError::VariableOutOfRange {
                        index: *i,
                        dim: self.dim,
                    });
                }
                self.intern(Key::Var(*i), Op::Var(*i))
            }
            Expr::Neg(a) => {
                let a = self.add(a)?;
                self.intern(Key::Neg(a), Op::Neg(a))
            }
            Expr::Sum(v) => {
                let slots = v.iter().map(|c| self.add(c)).collect::<Result<Vec<_>, _>>()?;
                if let Some(&s) = self.seen.get(&Key::Sum(slots.clone())) {
                    return Ok(s);
                }
                let (a, b) = self.list(&slots);
                self.intern(Key::Sum(slots), Op::Sum(a, b))
            }
            Expr::Product(v) => {
                // a single constant factor becomes a scaling
                let consts: Vec<usize> = (0..v.len()).filter(|&k| matches!(v[k], Expr::Const(_))).collect();
                if consts.len() == 1 && v.len() >= 2 {
                    let Expr::Const(c) = v[consts[0]] else { unreachable!() };
                    let rest: Vec<Expr> = v
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| *k != consts[0])
                        .map(|(_, e)| e.clone())
                        .collect();
                    let inner = self.add(&Expr::product(rest))?;
                    return Ok(self.intern(Key::Scale(c.to_bits(), inner), Op::Scale(c, inner)));
                }
                let slots = v.iter().map(|c| self.add(c)).collect::<Result<Vec<_>, _>>()?;
                if let Some(&s) = self.seen.get(&Key::Product(slots.clone())) {
                    return Ok(s);
                }
                let (a, b) = self.list(&slots);
                self.intern(Key::Product(slots), Op::Product(a, b))
            }
            Expr::Quotient(a, b) => {
                let (a, b) = (self.add(a)?, self.add(b)?);
                self.intern(Key::Quotient(a, b), Op::Quotient(a, b))
            }
            Expr::Pow(a, k) => {
                let a = self.add(a)?;
                self.intern(Key::Pow(a, *k), Op::Pow(a, *k))
            }
            Expr::Unary(f, a) => {
                let a = self.add(a)?;
                self.intern(Key::Unary(*f, a), Op::Unary(*f, a))
            }
            Expr::Min(a, b) => {
                let (a, b) = (self.add(a)?, self.add(b)?);
                self.intern(Key::Min(a, b), Op::Min(a, b))
            }
            Expr::Max(a, b) => {
                let (a, b) = (self.add(a)?, self.add(b)?);
                self.intern(Key::Max(a, b), Op::Max(a, b))
            }
        })
    }
}

impl Tape {
    /// Compiles `exprs` over `dim` variables.
    pub fn compile(exprs: &[&Expr], dim: usize) -> Result<Self, EvalError> {
        let mut b = Builder {
            ops: Vec::new(),
            args: Vec::new(),
            seen: HashMap::new(),
            dim,
        };
        let outputs = exprs.iter().map(|e| b.add(e)).collect::<Result<Vec<_>, _>>()?;
        let smooth = !b.ops.iter().any(|op| matches!(op, Op::Min(..) | Op::Max(..)));
        Ok(Self {
            ops: b.ops,
            args: b.args,
            outputs,
            dim,
            smooth,
        })
    }

    pub fn compile_one(expr: &Expr, dim: usize) -> Result<Self, EvalError> {
        Self::compile(&[expr], dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn outputs(&self) -> usize {
        self.outputs.len()
    }

    /// No `min`/`max` nodes: every output is C^∞ wherever it is defined.
    pub fn is_smooth(&self) -> bool {
        self.smooth
    }

    /// Evaluates every output with the variables bound to `vars`, reusing
    /// `buf` as scratch space.
    pub fn eval_with<N: Number>(&self, vars: &[N], buf: &mut Vec<N>) -> Result<Vec<N>, EvalError> {
        if vars.len() != self.dim {
            return Err(EvalError::Dimension {
                expected: self.dim,
                got: vars.len(),
            });
        }
        buf.clear();
        buf.reserve(self.ops.len());
        for op in &self.ops {
            let v = match *op {
                Op::Const(c) => N::constant(c),
                Op::Var(i) => vars[i].clone(),
                Op::Neg(a) => buf[a as usize].neg(),
                Op::Sum(s, e) => {
                    let idx = &self.args[s as usize..e as usize];
                    let mut acc = buf[idx[0] as usize].clone();
                    for &k in &idx[1..] {
                        acc = acc.add(&buf[k as usize]);
                    }
                    acc
                }
                Op::Product(s, e) => {
                    let idx = &self.args[s as usize..e as usize];
                    let mut acc = buf[idx[0] as usize].clone();
                    for &k in &idx[1..] {
                        acc = acc.mul(&buf[k as usize]);
                    }
                    acc
                }
                Op::Scale(c, a) => buf[a as usize].scale(c),
                Op::Quotient(a, b) => buf[a as usize].div(&buf[b as usize])?,
                Op::Pow(a, k) => buf[a as usize].powi(k)?,
                Op::Unary(f, a) => {
                    let x = &buf[a as usize];
                    match f {
                        UnaryFn::Sin => x.sin(),
                        UnaryFn::Cos => x.cos(),
                        UnaryFn::Tanh => x.tanh(),
                        UnaryFn::Exp => x.exp()?,
                        UnaryFn::Sqrt => x.sqrt()?,
                    }
                }
                Op::Min(a, b) => buf[a as usize].min(&buf[b as usize]),
                Op::Max(a, b) => buf[a as usize].max(&buf[b as usize]),
            };
            buf.push(v);
        }
        Ok(self.outputs.iter().map(|&o| buf[o as usize].clone()).collect())
    }

    fn check_dim(&self, got: usize) -> Result<(), EvalError> {
        if got == self.dim {
            Ok(())
        } else {
            Err(EvalError::Dimension {
                expected: self.dim,
                got,
            })
        }
    }

    pub fn eval_point<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>, EvalError> {
        self.eval_with(x, &mut Vec::new())
    }

    pub fn eval_dual1<T: Scalar>(&self, x: &[T]) -> Result<Vec<Dual1<T>>, EvalError> {
        self.check_dim(x.len())?;
        let n = x.len();
        let vars: Vec<_> = (0..n).map(|i| Dual1::variable(x[i], i, n)).collect();
        self.eval_with(&vars, &mut Vec::new())
    }

    pub fn eval_dual2<T: Scalar>(&self, x: &[T]) -> Result<Vec<Dual2<T>>, EvalError> {
        self.check_dim(x.len())?;
        let n = x.len();
        let vars: Vec<_> = (0..n).map(|i| Dual2::variable(x[i], i, n)).collect();
        self.eval_with(&vars, &mut Vec::new())
    }

    pub fn eval_interval<T: Scalar>(&self, b: &IntervalBox<T>) -> Result<Vec<Interval<T>>, EvalError> {
        self.eval_with(b.sides(), &mut Vec::new())
    }

    pub fn interval_dual1_vars<T: Scalar>(b: &IntervalBox<T>) -> Vec<Dual1<Interval<T>>> {
        let n = b.dim();
        (0..n).map(|i| Dual1::variable(b.side(i), i, n)).collect()
    }

    pub fn interval_dual2_vars<T: Scalar>(b: &IntervalBox<T>) -> Vec<Dual2<Interval<T>>> {
        let n = b.dim();
        (0..n).map(|i| Dual2::variable(b.side(i), i, n)).collect()
    }

    /// Seeds for third-order enclosures: Hessian entries carry their own gradient.
    pub fn interval_dual3_vars<T: Scalar>(b: &IntervalBox<T>) -> Vec<Dual2<Dual1<Interval<T>>>> {
        let n = b.dim();
        (0..n)
            .map(|i| Dual2::variable(Dual1::variable(b.side(i), i, n), i, n))
            .collect()
    }

    pub fn eval_interval_dual1<T: Scalar>(&self, b: &IntervalBox<T>) -> Result<Vec<Dual1<Interval<T>>>, EvalError> {
        self.eval_with(&Self::interval_dual1_vars(b), &mut Vec::new())
    }

    pub fn eval_interval_dual2<T: Scalar>(&self, b: &IntervalBox<T>) -> Result<Vec<Dual2<Interval<T>>>, EvalError> {
        self.eval_with(&Self::interval_dual2_vars(b), &mut Vec::new())
    }

    pub fn eval_interval_dual3<T: Scalar>(
        &self,
        b: &IntervalBox<T>,
    ) -> Result<Vec<Dual2<Dual1<Interval<T>>>>, EvalError> {
        self.eval_with(&Self::interval_dual3_vars(b), &mut Vec::new())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn shared_subtrees_are_stored_once() {
        let names = vec!["x".to_string()];
        let e = parse("tanh(2*x+1)^2 + tanh(2*x+1)", &names).unwrap();
        let tape = Tape::compile_one(&e, 1).unwrap();
        let tanh_nodes = tape
            .ops
            .iter()
            .filter(|o| matches!(o, Op::Unary(UnaryFn::Tanh, _)))
            .count();
        assert_eq!(tanh_nodes, 1);
        let x = 0.3f64;
        let t = (2.0 * x + 1.0).tanh();
        assert!((tape.eval_point(&[x]).unwrap()[0] - (t * t + t)).abs() < 1e-15);
    }

    #[test]
    fn dimension_checks() {
        let e = Expr::Var(2);
        assert_eq!(
            Tape::compile_one(&e, 2).unwrap_err(),
            EvalError::VariableOutOfRange { index: 2, dim: 2 }
        );
        let t = Tape::compile_one(&Expr::Var(0), 1).unwrap();
        assert!(matches!(t.eval_point(&[1.0f64, 2.0]), Err(EvalError::Dimension { .. })));
    }
}
