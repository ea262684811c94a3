//! Dynamical systems with stage costs on a box domain.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{parse, EvalError, Expr, ParseError, Tape};
use crate::interval::IntervalBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Lyapunov,
    Hjb,
}

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("cannot read system config: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed system config: {0}")]
    Format(String),
    #[error("field `{field}`: {source}")]
    Parse { field: String, source: ParseError },
    #[error("field `{field}`: {source}")]
    Eval { field: String, source: EvalError },
    #[error("dimension mismatch in `{field}`: expected {expected}, got {got}")]
    Dimension { field: String, expected: usize, got: usize },
    #[error("origin is not an equilibrium: f{component}(0) = {value:e}")]
    Equilibrium { component: usize, value: f64 },
    #[error("`{field}` must vanish at the origin, got {value:e}")]
    NonzeroAtOrigin { field: String, value: f64 },
    #[error("`{field}` is not positive at {point:?} (value {value:e})")]
    NotPositive { field: String, point: Vec<f64>, value: f64 },
    #[error("R is not symmetric: R[{i}][{j}] != R[{j}][{i}] at {point:?}")]
    NonSymmetricR { i: usize, j: usize, point: Vec<f64> },
    #[error("R is not positive definite at {point:?}")]
    RNotPositiveDefinite { point: Vec<f64> },
    #[error("domain must contain the origin in its interior: {0}")]
    Domain(String),
    #[error("field `{0}` is required in {1} mode")]
    Missing(&'static str, &'static str),
    #[error("unknown bundled system `{0}`")]
    UnknownBundled(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cost {
    Lyapunov { omega: Expr },
    Hjb { q: Expr, r: Vec<Vec<Expr>> },
}

/// `ẋ = f(x) + g(x)u` with stage cost, over the box `domain`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub name: String,
    pub n: usize,
    pub k: usize,
    pub vars: Vec<String>,
    pub f: Vec<Expr>,
    /// `n` rows of `k` entries; empty rows when `k = 0`.
    pub g: Vec<Vec<Expr>>,
    pub cost: Cost,
    pub domain: IntervalBox<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainConfig {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemConfig {
    name: Option<String>,
    mode: Mode,
    state_dim: usize,
    control_dim: Option<usize>,
    vars: Vec<String>,
    f: Vec<String>,
    g: Option<Vec<Vec<String>>>,
    omega: Option<String>,
    #[serde(rename = "Q", alias = "q")]
    q: Option<String>,
    #[serde(rename = "R", alias = "r")]
    r: Option<Vec<Vec<String>>>,
    domain: DomainConfig,
}

const BUNDLED: &[(&str, &str)] = &[
    ("pendulum_lyap", include_str!("../configs/pendulum_lyap.toml")),
    ("pendulum_hjb", include_str!("../configs/pendulum_hjb.toml")),
    ("linear2d_lyap", include_str!("../configs/linear2d_lyap.toml")),
    ("lqr_di", include_str!("../configs/lqr_di.toml")),
    ("scalar_exp", include_str!("../configs/scalar_exp.toml")),
];

/// Names of the systems shipped with the crate.
pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

/// Config text of a bundled system.
pub fn bundled_source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn bundled(name: &str) -> Result<SystemModel, SystemError> {
    let src = bundled_source(name).ok_or_else(|| SystemError::UnknownBundled(name.into()))?;
    load_system(src)
}

fn dim_check(field: &str, expected: usize, got: usize) -> Result<(), SystemError> {
    if expected == got {
        Ok(())
    } else {
        Err(SystemError::Dimension {
            field: field.into(),
            expected,
            got,
        })
    }
}

fn parse_field(field: String, text: &str, vars: &[String]) -> Result<Expr, SystemError> {
    parse(text, vars).map_err(|source| SystemError::Parse { field, source })
}

/// Parses and validates a TOML system description.
pub fn load_system(config: &str) -> Result<SystemModel, SystemError> {
    let cfg: SystemConfig = toml::from_str(config).map_err(|e| SystemError::Format(e.to_string()))?;
    let n = cfg.state_dim;
    let k = cfg.control_dim.unwrap_or(0);
    dim_check("vars", n, cfg.vars.len())?;
    dim_check("f", n, cfg.f.len())?;
    dim_check("domain.lo", n, cfg.domain.lo.len())?;
    dim_check("domain.hi", n, cfg.domain.hi.len())?;
    let vars = cfg.vars;
    let f = cfg
        .f
        .iter()
        .enumerate()
        .map(|(i, s)| parse_field(format!("f[{i}]"), s, &vars))
        .collect::<Result<Vec<_>, _>>()?;
    let g = match (&cfg.g, k) {
        (None, 0) => vec![Vec::new(); n],
        (None, _) => return Err(SystemError::Missing("g", "control")),
        (Some(rows), _) => {
            dim_check("g", n, rows.len())?;
            let mut g = Vec::with_capacity(n);
            for (i, row) in rows.iter().enumerate() {
                dim_check(&format!("g[{i}]"), k, row.len())?;
                g.push(
                    row.iter()
                        .enumerate()
                        .map(|(j, s)| parse_field(format!("g[{i}][{j}]"), s, &vars))
                        .collect::<Result<Vec<_>, _>>()?,
                );
            }
            g
        }
    };
    let cost = match cfg.mode {
        Mode::Lyapunov => {
            let omega = cfg.omega.as_deref().ok_or(SystemError::Missing("omega", "lyapunov"))?;
            Cost::Lyapunov {
                omega: parse_field("omega".into(), omega, &vars)?,
            }
        }
        Mode::Hjb => {
            if k == 0 {
                return Err(SystemError::Missing("control_dim", "hjb"));
            }
            let q = cfg.q.as_deref().ok_or(SystemError::Missing("Q", "hjb"))?;
            let rows = cfg.r.as_ref().ok_or(SystemError::Missing("R", "hjb"))?;
            dim_check("R", k, rows.len())?;
            let mut r = Vec::with_capacity(k);
            for (i, row) in rows.iter().enumerate() {
                dim_check(&format!("R[{i}]"), k, row.len())?;
                r.push(
                    row.iter()
                        .enumerate()
                        .map(|(j, s)| parse_field(format!("R[{i}][{j}]"), s, &vars))
                        .collect::<Result<Vec<_>, _>>()?,
                );
            }
            Cost::Hjb {
                q: parse_field("Q".into(), q, &vars)?,
                r,
            }
        }
    };
    let domain =
        IntervalBox::from_bounds(&cfg.domain.lo, &cfg.domain.hi).map_err(|e| SystemError::Domain(e.to_string()))?;
    let sys = SystemModel {
        name: cfg.name.unwrap_or_else(|| "system".into()),
        n,
        k,
        vars,
        f,
        g,
        cost,
        domain,
    };
    sys.validate()?;
    Ok(sys)
}

pub fn load_system_file(path: impl AsRef<Path>) -> Result<SystemModel, SystemError> {
    load_system(&std::fs::read_to_string(path)?)
}

/// Latin-hypercube sample of `count` points in `b`.
pub fn latin_hypercube(b: &IntervalBox<f64>, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = b.dim();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    for d in 0..n {
        let side = b.side(d);
        let mut strata: Vec<usize> = (0..count).collect();
        for i in (1..count).rev() {
            strata.swap(i, rng.gen_range(0..=i));
        }
        let w = side.width() / count as f64;
        cols.push(
            strata
                .into_iter()
                .map(|s| (side.lo() + (s as f64 + rng.gen::<f64>()) * w).min(side.hi()))
                .collect(),
        );
    }
    (0..count).map(|i| (0..n).map(|d| cols[d][i]).collect()).collect()
}

const ORIGIN_TOL: f64 = 1e-12;
const SPOT_CHECKS: usize = 1024;

impl SystemModel {
    pub fn mode(&self) -> Mode {
        match self.cost {
            Cost::Lyapunov { .. } => Mode::Lyapunov,
            Cost::Hjb { .. } => Mode::Hjb,
        }
    }

    /// ω in Lyapunov mode, Q in HJB mode.
    pub fn weight(&self) -> &Expr {
        match &self.cost {
            Cost::Lyapunov { omega } => omega,
            Cost::Hjb { q, .. } => q,
        }
    }

    pub fn r_matrix(&self) -> Option<&Vec<Vec<Expr>>> {
        match &self.cost {
            Cost::Hjb { r, .. } => Some(r),
            Cost::Lyapunov { .. } => None,
        }
    }

    /// One tape with outputs `f (n) | g row-major (n·k) | weight | R row-major (k·k)`.
    pub fn tape(&self) -> Result<SystemTape, EvalError> {
        let mut outs: Vec<&Expr> = self.f.iter().collect();
        outs.extend(self.g.iter().flatten());
        outs.push(self.weight());
        if let Some(r) = self.r_matrix() {
            outs.extend(r.iter().flatten());
        }
        Ok(SystemTape {
            tape: Tape::compile(&outs, self.n)?,
            n: self.n,
            k: self.k,
        })
    }

    fn validate(&self) -> Result<(), SystemError> {
        let n = self.n;
        if !self.domain.origin_in_interior() {
            return Err(SystemError::Domain(format!("{}", self.domain)));
        }
        let tape = self.tape().map_err(|source| SystemError::Eval {
            field: "system".into(),
            source,
        })?;
        let eval = |x: &[f64]| {
            tape.eval(x).map_err(|source| SystemError::Eval {
                field: format!("system at {x:?}"),
                source,
            })
        };
        let at0 = eval(&vec![0.0; n])?;
        for (i, v) in at0.f.iter().enumerate() {
            if v.abs() > ORIGIN_TOL {
                return Err(SystemError::Equilibrium {
                    component: i,
                    value: *v,
                });
            }
        }
        let wname = match self.mode() {
            Mode::Lyapunov => "omega",
            Mode::Hjb => "Q",
        };
        if at0.weight.abs() > ORIGIN_TOL {
            return Err(SystemError::NonzeroAtOrigin {
                field: wname.into(),
                value: at0.weight,
            });
        }
        let mut points = latin_hypercube(&self.domain, SPOT_CHECKS, 0x5eed);
        points.push(vec![0.0; n]);
        for x in &points {
            let v = eval(x)?;
            let nonzero = x.iter().any(|&c| c != 0.0);
            if nonzero && !(v.weight > 0.0) {
                return Err(SystemError::NotPositive {
                    field: wname.into(),
                    point: x.clone(),
                    value: v.weight,
                });
            }
            if self.mode() == Mode::Hjb {
                let k = self.k;
                for i in 0..k {
                    for j in i + 1..k {
                        let (a, b) = (v.r[i * k + j], v.r[j * k + i]);
                        if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                            return Err(SystemError::NonSymmetricR { i, j, point: x.clone() });
                        }
                    }
                }
                if DMatrix::from_row_slice(k, k, &v.r).cholesky().is_none() {
                    return Err(SystemError::RNotPositiveDefinite { point: x.clone() });
                }
            }
        }
        Ok(())
    }

    /// `(A, B) = (Df(0), g(0))`; `B` has zero columns for autonomous systems.
    pub fn linearize(&self) -> Result<(DMatrix<f64>, DMatrix<f64>), EvalError> {
        let n = self.n;
        let zero = vec![0.0; n];
        let tape = Tape::compile(&self.f.iter().collect::<Vec<_>>(), n)?;
        let jac = tape.eval_dual2(&zero)?;
        let a = DMatrix::from_fn(n, n, |i, j| jac[i].grad(j));
        let g0 = self.tape()?.eval(&zero)?.g;
        Ok((a, DMatrix::from_row_slice(n, self.k, &g0)))
    }

    /// Half the Hessian of the weight at the origin: `weight(x) ≈ xᵀWx`.
    pub fn weight_quadratic(&self) -> Result<DMatrix<f64>, EvalError> {
        let d = self.weight().eval_dual2(&vec![0.0; self.n])?;
        Ok(DMatrix::from_fn(self.n, self.n, |i, j| 0.5 * d.hess(i, j)))
    }
}

/// Values of all system expressions at one point.
#[derive(Debug, Clone)]
pub struct SystemValues {
    pub f: Vec<f64>,
    /// Row-major `n×k`.
    pub g: Vec<f64>,
    pub weight: f64,
    /// Row-major `k×k`; empty in Lyapunov mode.
    pub r: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SystemTape {
    tape: Tape,
    n: usize,
    k: usize,
}

impl SystemTape {
    pub fn eval(&self, x: &[f64]) -> Result<SystemValues, EvalError> {
        self.eval_buf(x, &mut Vec::new())
    }

    pub fn eval_buf(&self, x: &[f64], buf: &mut Vec<f64>) -> Result<SystemValues, EvalError> {
        let out = self.tape.eval_with(x, buf)?;
        let (n, k) = (self.n, self.k);
        Ok(SystemValues {
            f: out[..n].to_vec(),
            g: out[n..n + n * k].to_vec(),
            weight: out[n + n * k],
            r: out[n + n * k + 1..].to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pendulum_configs_load() {
        let lyap = bundled("pendulum_lyap").unwrap();
        assert_eq!(lyap.mode(), Mode::Lyapunov);
        assert_eq!(lyap.f[1].eval(&[0.0, 0.0]).unwrap(), 0.0);
        let hjb = bundled("pendulum_hjb").unwrap();
        let (a, b) = hjb.linearize().unwrap();
        assert_eq!(a.as_slice(), &[0.0, 19.6, 1.0, -4.0]);
        assert_eq!(b.as_slice(), &[0.0, 40.0]);
        let (_, b) = lyap.linearize().unwrap();
        assert_eq!(b.ncols(), 0);
        for name in bundled_names() {
            bundled(name).unwrap();
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let base = bundled_source("linear2d_lyap").unwrap();
        let off = base.replace("\"x2\", \"-2*x1", "\"x2 + 0.5\", \"-2*x1");
        assert!(matches!(
            load_system(&off),
            Err(SystemError::Equilibrium { component: 0, .. })
        ));
        let dims = base.replace("state_dim = 2", "state_dim = 3");
        assert!(matches!(load_system(&dims), Err(SystemError::Dimension { .. })));
        let neg = base.replace("omega = \"x1^2 + x2^2\"", "omega = \"x1^2 - x2^2\"");
        assert!(matches!(load_system(&neg), Err(SystemError::NotPositive { .. })));
        let unknown = base.replace("\"x2\", \"-2*x1", "\"y\", \"-2*x1");
        assert!(matches!(load_system(&unknown), Err(SystemError::Parse { .. })));
        let hjb = bundled_source("pendulum_hjb").unwrap();
        let asym = hjb
            .replace("control_dim = 1", "control_dim = 2")
            .replace("g = [[\"0\"], [\"40\"]]", "g = [[\"0\", \"0\"], [\"40\", \"1\"]]")
            .replace("R = [[\"2\"]]", "R = [[\"2\", \"x1\"], [\"0\", \"2\"]]");
        assert!(matches!(load_system(&asym), Err(SystemError::NonSymmetricR { .. })));
    }

    #[test]
    fn latin_hypercube_strata() {
        let b = IntervalBox::from_bounds(&[-1.0, 0.0], &[1.0, 2.0]).unwrap();
        let pts = latin_hypercube(&b, 50, 1);
        assert_eq!(pts, latin_hypercube(&b, 50, 1));
        for d in 0..2 {
            let mut bins = [0; 50];
            for p in &pts {
                assert!(b.side(d).contains(p[d]));
                let s = ((p[d] - b.side(d).lo()) / 2.0 * 50.0).floor().min(49.0) as usize;
                bins[s] += 1;
            }
            assert!(bins.iter().all(|&c| c == 1));
        }
    }
}
