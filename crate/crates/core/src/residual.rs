//! PDE residuals and the induced feedback policy as expressions.

use thiserror::Error;

use crate::expr::Expr;
use crate::net::ValueNet64;
use crate::system::{Mode, SystemModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResidualError {
    #[error("system is in {found:?} mode, expected {expected:?}")]
    Mode { expected: Mode, found: Mode },
    #[error("value function has dimension {value}, system has {system}")]
    Dimension { value: usize, system: usize },
    #[error("R has dimension {0}; only diagonal R is supported beyond 3×3")]
    UnsupportedR(usize),
    #[error("value function is not differentiable (min/max node)")]
    NotDifferentiable,
}

/// Something that can be lowered to `V̂` and `DV̂·v` expressions.
pub trait ValueFunction {
    fn dim(&self) -> usize;
    fn value_expr(&self) -> Expr;
    fn directional_expr(&self, v: &[Expr]) -> Expr;
}

impl ValueFunction for ValueNet64 {
    fn dim(&self) -> usize {
        self.n
    }

    fn value_expr(&self) -> Expr {
        self.centered_expr()
    }

    fn directional_expr(&self, v: &[Expr]) -> Expr {
        ValueNet64::directional_expr(self, v)
    }
}

/// A value function given directly as an expression, differentiated symbolically.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprValue {
    pub value: Expr,
    pub grad: Vec<Expr>,
}

impl ExprValue {
    pub fn new(value: Expr, n: usize) -> Result<Self, ResidualError> {
        let grad = (0..n)
            .map(|i| value.diff(i))
            .collect::<Option<Vec<_>>>()
            .ok_or(ResidualError::NotDifferentiable)?;
        Ok(Self { value, grad })
    }

    /// `xᵀPx` for a row-major `n×n` matrix.
    pub fn quadratic(p: &[f64], n: usize) -> Self {
        let mut terms = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let c = p[i * n + j];
                if c != 0.0 {
                    terms.push(Expr::product(vec![Expr::Const(c), Expr::Var(i), Expr::Var(j)]));
                }
            }
        }
        Self::new(Expr::sum(terms), n).expect("polynomials are differentiable")
    }
}

impl ValueFunction for ExprValue {
    fn dim(&self) -> usize {
        self.grad.len()
    }

    fn value_expr(&self) -> Expr {
        self.value.clone()
    }

    fn directional_expr(&self, v: &[Expr]) -> Expr {
        Expr::sum(
            self.grad
                .iter()
                .zip(v)
                .filter(|(_, e)| **e != Expr::Const(0.0))
                .map(|(g, e)| Expr::product(vec![g.clone(), e.clone()]))
                .collect(),
        )
    }
}

/// Residual `r`, its weight (ω or Q), the value function and, in HJB mode,
/// the feedback policy `û = −½R⁻¹gᵀDV̂ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBundle {
    pub mode: Mode,
    pub n: usize,
    pub r: Expr,
    pub weight: Expr,
    pub value: Expr,
    pub policy: Vec<Expr>,
}

fn check(sys: &SystemModel, v: &impl ValueFunction, mode: Mode) -> Result<(), ResidualError> {
    if sys.mode() != mode {
        return Err(ResidualError::Mode {
            expected: mode,
            found: sys.mode(),
        });
    }
    if v.dim() != sys.n {
        return Err(ResidualError::Dimension {
            value: v.dim(),
            system: sys.n,
        });
    }
    Ok(())
}

/// `r = DV̂·f + ω`.
pub fn build_lyap_residual(sys: &SystemModel, v: &impl ValueFunction) -> Result<ResidualBundle, ResidualError> {
    check(sys, v, Mode::Lyapunov)?;
    let weight = sys.weight().clone();
    Ok(ResidualBundle {
        mode: Mode::Lyapunov,
        n: sys.n,
        r: Expr::sum(vec![v.directional_expr(&sys.f), weight.clone()]),
        weight,
        value: v.value_expr(),
        policy: Vec::new(),
    })
}

fn is_const_zero(e: &Expr) -> bool {
    *e == Expr::Const(0.0)
}

/// `adj(R)` and `det(R)` for `k ≤ 3`.
fn adjugate(r: &[Vec<Expr>]) -> (Vec<Vec<Expr>>, Expr) {
    let k = r.len();
    let e = |i: usize, j: usize| r[i][j].clone();
    let prod = |a: Expr, b: Expr| Expr::product(vec![a, b]);
    match k {
        1 => (vec![vec![Expr::Const(1.0)]], e(0, 0)),
        2 => (
            vec![vec![e(1, 1), e(0, 1).neg()], vec![e(1, 0).neg(), e(0, 0)]],
            Expr::minus(prod(e(0, 0), e(1, 1)), prod(e(0, 1), e(1, 0))),
        ),
        _ => {
            let minor = |i: usize, j: usize| {
                let rows: Vec<usize> = (0..3).filter(|&x| x != i).collect();
                let cols: Vec<usize> = (0..3).filter(|&x| x != j).collect();
                Expr::minus(
                    prod(e(rows[0], cols[0]), e(rows[1], cols[1])),
                    prod(e(rows[0], cols[1]), e(rows[1], cols[0])),
                )
            };
            let cof = |i: usize, j: usize| {
                if (i + j).is_multiple_of(2) {
                    minor(i, j)
                } else {
                    minor(i, j).neg()
                }
            };
            let adj: Vec<Vec<Expr>> = (0..3).map(|i| (0..3).map(|j| cof(j, i)).collect()).collect();
            let det = Expr::sum((0..3).map(|j| prod(e(0, j), cof(0, j))).collect());
            (adj, det)
        }
    }
}

/// `r = Q + DV̂·f − ¼ DV̂ g R⁻¹ gᵀ DV̂ᵀ` and `û = −½R⁻¹gᵀDV̂ᵀ`.
pub fn build_hjb_residual(sys: &SystemModel, v: &impl ValueFunction) -> Result<ResidualBundle, ResidualError> {
    check(sys, v, Mode::Hjb)?;
    let (n, k) = (sys.n, sys.k);
    let rm = sys.r_matrix().expect("HJB mode carries R");
    // p = gᵀDV̂ᵀ, one directional derivative per control channel
    let p: Vec<Expr> = (0..k)
        .map(|l| v.directional_expr(&(0..n).map(|j| sys.g[j][l].clone()).collect::<Vec<_>>()))
        .collect();
    let diagonal = (0..k).all(|i| (0..k).all(|j| i == j || is_const_zero(&rm[i][j])));
    let (quad, policy) = if diagonal {
        let quad = Expr::sum(
            (0..k)
                .map(|l| {
                    Expr::quotient(
                        p[l].clone().pow(2),
                        Expr::product(vec![Expr::Const(4.0), rm[l][l].clone()]),
                    )
                })
                .collect(),
        );
        let policy = (0..k)
            .map(|l| Expr::quotient(p[l].clone(), Expr::product(vec![Expr::Const(2.0), rm[l][l].clone()])).neg())
            .collect();
        (quad, policy)
    } else {
        if k > 3 {
            return Err(ResidualError::UnsupportedR(k));
        }
        let (adj, det) = adjugate(rm);
        let adj_p: Vec<Expr> = (0..k)
            .map(|l| {
                Expr::sum(
                    (0..k)
                        .map(|c| Expr::product(vec![adj[l][c].clone(), p[c].clone()]))
                        .collect(),
                )
            })
            .collect();
        let form = Expr::sum(
            (0..k)
                .map(|l| Expr::product(vec![p[l].clone(), adj_p[l].clone()]))
                .collect(),
        );
        let quad = Expr::quotient(form, Expr::product(vec![Expr::Const(4.0), det.clone()]));
        let policy = adj_p
            .into_iter()
            .map(|a| Expr::quotient(a, Expr::product(vec![Expr::Const(2.0), det.clone()])).neg())
            .collect();
        (quad, policy)
    };
    let weight = sys.weight().clone();
    Ok(ResidualBundle {
        mode: Mode::Hjb,
        n,
        r: Expr::sum(vec![weight.clone(), v.directional_expr(&sys.f), quad.neg()]),
        weight,
        value: v.value_expr(),
        policy,
    })
}

/// `Q + ûᵀRû + DV̂·(f + gû)`, the policy form of the HJB residual.
pub fn hjb_policy_form(sys: &SystemModel, v: &impl ValueFunction, bundle: &ResidualBundle) -> Expr {
    let (n, k) = (sys.n, sys.k);
    let u = &bundle.policy;
    let rm = sys.r_matrix().expect("HJB mode carries R");
    let closed: Vec<Expr> = (0..n)
        .map(|j| {
            let mut t = vec![sys.f[j].clone()];
            t.extend((0..k).map(|l| Expr::product(vec![sys.g[j][l].clone(), u[l].clone()])));
            Expr::sum(t)
        })
        .collect();
    let mut terms = vec![sys.weight().clone()];
    for a in 0..k {
        for b in 0..k {
            terms.push(Expr::product(vec![u[a].clone(), rm[a][b].clone(), u[b].clone()]));
        }
    }
    terms.push(v.directional_expr(&closed));
    Expr::sum(terms)
}
