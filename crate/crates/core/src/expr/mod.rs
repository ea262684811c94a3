//! Differentiable expression trees.
//!
//! An [`Expr`] is parsed from text (see [`parse`]) or built programmatically,
//! compiled once into a [`Tape`], and then evaluated under any [`Number`]
//! semantics: point values, exact first/second derivatives, interval
//! enclosures, or derivative enclosures.
//!
//! Grammar accepted by [`parse`]:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' '-'? integer)?
//! primary := number | ident | ident '(' expr (',' expr)? ')' | '(' expr ')'
//! number  := digits ('.' digits?)? (('e'|'E') ('+'|'-')? digits)?
//! ```
//!
//! Functions: `sin cos tanh exp sqrt` (one argument), `min max` (two).

mod parse;
mod tape;

pub use parse::{parse, ParseError};
pub use tape::{EvalError, Tape};

use std::fmt;

use crate::dual::Dual2;
use crate::interval::{Interval, IntervalBox};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnaryFn {
    Sin,
    Cos,
    Tanh,
    Exp,
    Sqrt,
}

impl UnaryFn {
    pub fn name(self) -> &'static str {
        match self {
            UnaryFn::Sin => "sin",
            UnaryFn::Cos => "cos",
            UnaryFn::Tanh => "tanh",
            UnaryFn::Exp => "exp",
            UnaryFn::Sqrt => "sqrt",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "sin" => UnaryFn::Sin,
            "cos" => UnaryFn::Cos,
            "tanh" => UnaryFn::Tanh,
            "exp" => UnaryFn::Exp,
            "sqrt" => UnaryFn::Sqrt,
            _ => return None,
        })
    }
}

/// Expression over variables `x₀ … xₙ₋₁`.
///
/// Subtraction is represented as a sum with a negated term.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Quotient(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Unary(UnaryFn, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn constant(c: f64) -> Self {
        Expr::Const(c)
    }

    pub fn var(i: usize) -> Self {
        Expr::Var(i)
    }

    pub fn zero() -> Self {
        Expr::Const(0.0)
    }

    pub fn sum(terms: Vec<Expr>) -> Self {
        match terms.len() {
            0 => Expr::Const(0.0),
            1 => terms.into_iter().next().unwrap(),
            _ => Expr::Sum(terms),
        }
    }

    pub fn product(factors: Vec<Expr>) -> Self {
        match factors.len() {
            0 => Expr::Const(1.0),
            1 => factors.into_iter().next().unwrap(),
            _ => Expr::Product(factors),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(self) -> Self {
        Expr::Neg(Box::new(self))
    }

    pub fn pow(self, k: i32) -> Self {
        Expr::Pow(Box::new(self), k)
    }

    pub fn unary(f: UnaryFn, arg: Expr) -> Self {
        Expr::Unary(f, Box::new(arg))
    }

    pub fn tanh(self) -> Self {
        Expr::unary(UnaryFn::Tanh, self)
    }

    pub fn quotient(num: Expr, den: Expr) -> Self {
        Expr::Quotient(Box::new(num), Box::new(den))
    }

    /// `c * self`, skipping the product for `c == 1`.
    pub fn scaled(self, c: f64) -> Self {
        if c == 1.0 {
            self
        } else {
            Expr::Product(vec![Expr::Const(c), self])
        }
    }

    /// `a - b`.
    pub fn minus(a: Expr, b: Expr) -> Self {
        Expr::Sum(vec![a, b.neg()])
    }

    /// `Σ xᵢ²` over `n` variables.
    pub fn norm_sq(n: usize) -> Self {
        Expr::sum((0..n).map(|i| Expr::Var(i).pow(2)).collect())
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Const(_) | Expr::Var(_) => vec![],
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Unary(_, a) => vec![a],
            Expr::Sum(v) | Expr::Product(v) => v.iter().collect(),
            Expr::Quotient(a, b) | Expr::Min(a, b) | Expr::Max(a, b) => vec![a, b],
        }
    }

    /// Largest variable index referenced plus one (0 for closed expressions).
    pub fn arity(&self) -> usize {
        match self {
            Expr::Var(i) => i + 1,
            _ => self.children().into_iter().map(Expr::arity).max().unwrap_or(0),
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children().into_iter().map(Expr::node_count).sum::<usize>()
    }

    /// Whether the expression contains a `min` or `max` node.
    pub fn has_kinks(&self) -> bool {
        matches!(self, Expr::Min(..) | Expr::Max(..)) || self.children().into_iter().any(Expr::has_kinks)
    }

    /// Rewrites every variable index through `map`.
    pub fn remap_vars(&self, map: &impl Fn(usize) -> Expr) -> Expr {
        let r = |e: &Expr| Box::new(e.remap_vars(map));
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(i) => map(*i),
            Expr::Neg(a) => Expr::Neg(r(a)),
            Expr::Sum(v) => Expr::Sum(v.iter().map(|e| e.remap_vars(map)).collect()),
            Expr::Product(v) => Expr::Product(v.iter().map(|e| e.remap_vars(map)).collect()),
            Expr::Quotient(a, b) => Expr::Quotient(r(a), r(b)),
            Expr::Pow(a, k) => Expr::Pow(r(a), *k),
            Expr::Unary(f, a) => Expr::Unary(*f, r(a)),
            Expr::Min(a, b) => Expr::Min(r(a), r(b)),
            Expr::Max(a, b) => Expr::Max(r(a), r(b)),
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    /// Symbolic partial derivative with respect to variable `i`; `None` if the
    /// expression contains `min`/`max`. Only zero terms are pruned.
    pub fn diff(&self, i: usize) -> Option<Expr> {
        let d = match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Var(j) => Expr::Const(if *j == i { 1.0 } else { 0.0 }),
            Expr::Neg(a) => {
                let da = a.diff(i)?;
                if da.is_zero() {
                    da
                } else {
                    da.neg()
                }
            }
            Expr::Sum(v) => {
                let terms = v.iter().map(|e| e.diff(i)).collect::<Option<Vec<_>>>()?;
                Expr::sum(terms.into_iter().filter(|t| !t.is_zero()).collect())
            }
            Expr::Product(v) => {
                let mut terms = Vec::new();
                for k in 0..v.len() {
                    let dk = v[k].diff(i)?;
                    if dk.is_zero() {
                        continue;
                    }
                    let mut f = v.clone();
                    f[k] = dk;
                    terms.push(Expr::product(f));
                }
                Expr::sum(terms)
            }
            Expr::Quotient(a, b) => {
                let (da, db) = (a.diff(i)?, b.diff(i)?);
                let mut num = Vec::new();
                if !da.is_zero() {
                    num.push(Expr::product(vec![da, (**b).clone()]));
                }
                if !db.is_zero() {
                    num.push(Expr::product(vec![(**a).clone(), db]).neg());
                }
                if num.is_empty() {
                    Expr::zero()
                } else {
                    Expr::quotient(Expr::sum(num), (**b).clone().pow(2))
                }
            }
            Expr::Pow(a, k) => {
                let da = a.diff(i)?;
                if da.is_zero() || *k == 0 {
                    Expr::zero()
                } else if *k == 1 {
                    da
                } else {
                    let base = if *k == 2 {
                        (**a).clone()
                    } else {
                        (**a).clone().pow(k - 1)
                    };
                    Expr::product(vec![Expr::Const(*k as f64), base, da])
                }
            }
            Expr::Unary(f, a) => {
                let da = a.diff(i)?;
                if da.is_zero() {
                    return Some(Expr::zero());
                }
                let outer = match f {
                    UnaryFn::Sin => Expr::unary(UnaryFn::Cos, (**a).clone()),
                    UnaryFn::Cos => Expr::unary(UnaryFn::Sin, (**a).clone()).neg(),
                    UnaryFn::Tanh => Expr::minus(Expr::Const(1.0), self.clone().pow(2)),
                    UnaryFn::Exp => self.clone(),
                    UnaryFn::Sqrt => Expr::quotient(Expr::Const(0.5), self.clone()),
                };
                Expr::product(vec![outer, da])
            }
            Expr::Min(..) | Expr::Max(..) => return None,
        };
        Some(d)
    }

    /// Point evaluation.
    pub fn eval<T: Scalar>(&self, x: &[T]) -> Result<T, EvalError> {
        Tape::compile(&[self], x.len())?.eval_point(x).map(|v| v[0])
    }

    /// Value, gradient and Hessian by forward-mode differentiation.
    pub fn eval_dual2<T: Scalar>(&self, x: &[T]) -> Result<Dual2<T>, EvalError> {
        let tape = Tape::compile(&[self], x.len())?;
        Ok(tape.eval_dual2(x)?.remove(0))
    }

    /// Natural interval extension over a box.
    pub fn eval_interval<T: Scalar>(&self, b: &IntervalBox<T>) -> Result<Interval<T>, EvalError> {
        Tape::compile(&[self], b.dim())?.eval_interval(b).map(|v| v[0])
    }

    /// Enclosures of value, gradient and Hessian over a box.
    pub fn eval_interval_dual2<T: Scalar>(&self, b: &IntervalBox<T>) -> Result<Dual2<Interval<T>>, EvalError> {
        let tape = Tape::compile(&[self], b.dim())?;
        Ok(tape.eval_interval_dual2(b)?.remove(0))
    }

    /// Renders the expression with the given variable names; the output
    /// parses back to an identical tree.
    pub fn display<'a>(&'a self, names: &'a [String]) -> ExprDisplay<'a> {
        ExprDisplay { expr: self, names }
    }
}

pub struct ExprDisplay<'a> {
    expr: &'a Expr,
    names: &'a [String],
}

impl ExprDisplay<'_> {
    fn write(&self, e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sub = |e: &Expr, f: &mut fmt::Formatter<'_>| self.write(e, f);
        match e {
            Expr::Const(c) => {
                if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                    write!(f, "({c:?})")
                } else {
                    write!(f, "{c:?}")
                }
            }
            Expr::Var(i) => match self.names.get(*i) {
                Some(n) => write!(f, "{n}"),
                None => write!(f, "x{i}"),
            },
            Expr::Neg(a) => {
                write!(f, "-(")?;
                sub(a, f)?;
                write!(f, ")")
            }
            Expr::Sum(v) => {
                write!(f, "(")?;
                for (k, t) in v.iter().enumerate() {
                    match (k, t) {
                        (0, Expr::Neg(a)) => {
                            write!(f, "-(")?;
                            sub(a, f)?;
                            write!(f, ")")?;
                        }
                        (0, t) => sub(t, f)?,
                        (_, Expr::Neg(a)) => {
                            write!(f, " - (")?;
                            sub(a, f)?;
                            write!(f, ")")?;
                        }
                        (_, t) => {
                            write!(f, " + ")?;
                            sub(t, f)?;
                        }
                    }
                }
                write!(f, ")")
            }
            Expr::Product(v) => {
                write!(f, "(")?;
                for (k, t) in v.iter().enumerate() {
                    if k > 0 {
                        write!(f, " * ")?;
                    }
                    sub(t, f)?;
                }
                write!(f, ")")
            }
            Expr::Quotient(a, b) => {
                write!(f, "(")?;
                sub(a, f)?;
                write!(f, " / ")?;
                sub(b, f)?;
                write!(f, ")")
            }
            Expr::Pow(a, k) => {
                write!(f, "(")?;
                sub(a, f)?;
                write!(f, ")^{k}")
            }
            Expr::Unary(u, a) => {
                write!(f, "{}(", u.name())?;
                sub(a, f)?;
                write!(f, ")")
            }
            Expr::Min(a, b) | Expr::Max(a, b) => {
                let name = if matches!(e, Expr::Min(..)) { "min" } else { "max" };
                write!(f, "{name}(")?;
                sub(a, f)?;
                write!(f, ", ")?;
                sub(b, f)?;
                write!(f, ")")
            }
        }
    }
}

impl fmt::Display for ExprDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(self.expr, f)
    }
}
