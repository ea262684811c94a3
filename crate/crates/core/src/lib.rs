//! Residual certificates for Lyapunov and Hamilton–Jacobi–Bellman equations.
//!
//! The crate trains shallow tanh networks on stationary PDEs by least-squares
//! collocation, and then proves bounds on the PDE residual with an interval
//! branch-and-bound verifier. A certified relative residual bound turns into
//! an explicit relative error bound on the value function.
//!
//! Evaluation code is generic over [`Scalar`] (`f32`/`f64`); the aliases
//! below fix the common `f64` instantiation.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dual;
pub mod expr;
pub mod interval;
pub mod linalg;
pub mod net;
pub mod number;
pub mod oracle;
pub mod residual;
pub mod scalar;
pub mod system;
pub mod trainer;
pub mod verifier;

pub use dual::{Dual1, Dual2};
pub use expr::{parse, EvalError, Expr, ParseError, Tape, UnaryFn};
pub use interval::{Interval, IntervalBox};
pub use net::{init_net, ValueNet, ValueNet64};
pub use number::{DomainError, Number};
pub use scalar::Scalar;
pub use system::{load_system, Mode, SystemModel};

pub type Interval64 = Interval<f64>;
pub type Box64 = IntervalBox<f64>;
pub type Interval32 = Interval<f32>;
pub type Box32 = IntervalBox<f32>;
