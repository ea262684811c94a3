//! Ground truth by simulation: trajectories, value integrals, closed-loop
//! policy costs and pointwise checks of the certified error bounds.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{EvalError, Expr, Tape};
use crate::residual::{build_hjb_residual, ResidualError, ValueFunction};
use crate::system::{Mode, SystemModel};
use crate::verifier::Certificate;

pub use crate::linalg::{lyap_solve, riccati_residual, riccati_solve, LinalgError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("step size underflow at t = {t} (stiff or blowing up)")]
    StepUnderflow { t: f64 },
    #[error("trajectory from {x0:?} did not converge ({reason:?})")]
    NotConverged { x0: Vec<f64>, reason: Termination },
    #[error("start point {0:?} lies outside the domain")]
    OutsideDomain(Vec<f64>),
    #[error("operation needs {0:?} mode")]
    Mode(Mode),
    #[error("certificate is not certified")]
    Uncertified,
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Residual(#[from] ResidualError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    LeftDomain,
    TimeLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub termination: Termination,
    /// Running cost accumulated along the trajectory.
    pub cost: f64,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory has a start point")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub value: f64,
    /// Cost of the linearized flow from the stopping state; already included
    /// in `value`.
    pub tail: f64,
    pub stop_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub rtol: f64,
    pub atol: f64,
    pub t_max: f64,
    pub stop_radius: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-13,
            t_max: 1000.0,
            stop_radius: 1e-5,
        }
    }
}

// Dormand–Prince 5(4)
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Closed-loop vector field with the running cost appended as the last
/// component.
struct Flow {
    tape: Tape,
    buf: Vec<f64>,
}

impl Flow {
    fn new(sys: &SystemModel, policy: Option<&[Expr]>) -> Result<Self, OracleError> {
        let (n, k) = (sys.n, sys.k);
        let mut outs: Vec<Expr> = Vec::with_capacity(n + 1);
        match (sys.mode(), policy) {
            (Mode::Hjb, Some(u)) => {
                for j in 0..n {
                    let mut t = vec![sys.f[j].clone()];
                    t.extend((0..k).map(|l| Expr::product(vec![sys.g[j][l].clone(), u[l].clone()])));
                    outs.push(Expr::sum(t));
                }
                let rm = sys.r_matrix().expect("HJB mode carries R");
                let mut cost = vec![sys.weight().clone()];
                for a in 0..k {
                    for b in 0..k {
                        cost.push(Expr::product(vec![u[a].clone(), rm[a][b].clone(), u[b].clone()]));
                    }
                }
                outs.push(Expr::sum(cost));
            }
            _ => {
                outs.extend(sys.f.iter().cloned());
                outs.push(sys.weight().clone());
            }
        }
        Ok(Self {
            tape: Tape::compile(&outs.iter().collect::<Vec<_>>(), n)?,
            buf: Vec::new(),
        })
    }

    fn eval(&mut self, y: &[f64], out: &mut [f64]) -> Result<(), OracleError> {
        let n = self.tape.dim();
        let v = self.tape.eval_with(&y[..n], &mut self.buf)?;
        out.copy_from_slice(&v);
        Ok(())
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn run(sys: &SystemModel, flow: &mut Flow, x0: &[f64], cfg: &OracleConfig) -> Result<Trajectory, OracleError> {
    let n = sys.n;
    if !sys.domain.contains(x0) {
        return Err(OracleError::OutsideDomain(x0.to_vec()));
    }
    let mut y: Vec<f64> = x0.iter().copied().chain([0.0]).collect();
    let dim = n + 1;
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut states = vec![x0.to_vec()];
    let mut k = vec![vec![0.0; dim]; 7];
    let mut tmp = vec![0.0; dim];
    let mut y5 = vec![0.0; dim];
    flow.eval(&y, &mut k[0])?;
    let mut h = 1e-3_f64.min(cfg.t_max);
    let termination = loop {
        if norm(&y[..n]) <= cfg.stop_radius {
            break Termination::Converged;
        }
        if t >= cfg.t_max {
            break Termination::TimeLimit;
        }
        h = h.min(cfg.t_max - t);
        if h < 1e-14 * (1.0 + t.abs()) {
            return Err(OracleError::StepUnderflow { t });
        }
        for s in 1..7 {
            for i in 0..dim {
                tmp[i] = y[i] + h * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>();
            }
            flow.eval(&tmp, &mut k[s])?;
        }
        let mut err = 0f64;
        for i in 0..dim {
            y5[i] = y[i] + h * (0..7).map(|j| B5[j] * k[j][i]).sum::<f64>();
            let y4 = y[i] + h * (0..7).map(|j| B4[j] * k[j][i]).sum::<f64>();
            let sc = cfg.atol + cfg.rtol * y[i].abs().max(y5[i].abs());
            err = err.max((y5[i] - y4).abs() / sc);
        }
        if !err.is_finite() {
            h *= 0.2;
            continue;
        }
        if err <= 1.0 {
            t += h;
            std::mem::swap(&mut y, &mut y5);
            // first-same-as-last: stage 7 was evaluated at the new point
            k.swap(0, 6);
            times.push(t);
            states.push(y[..n].to_vec());
            if !sys.domain.contains(&y[..n]) {
                break Termination::LeftDomain;
            }
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    };
    Ok(Trajectory {
        times,
        states,
        termination,
        cost: y[n],
    })
}

/// Integrates `ẋ = f(x) + g(x)·u(x)` (or `ẋ = f(x)` without a policy) from
/// `x0` with an adaptive Dormand–Prince 5(4) scheme, accumulating the
/// running cost `weight + uᵀRu`. Stops inside the stop ball, on leaving the
/// domain, or at `t_max`.
pub fn integrate(
    sys: &SystemModel,
    x0: &[f64],
    policy: Option<&[Expr]>,
    cfg: &OracleConfig,
) -> Result<Trajectory, OracleError> {
    let mut flow = Flow::new(sys, policy)?;
    run(sys, &mut flow, x0, cfg)
}

/// Quadratic form of the linearized cost-to-go: `P` with `AᵀP + PA = −W`.
fn tail_matrix(sys: &SystemModel, policy: Option<&[Expr]>) -> Result<DMatrix<f64>, OracleError> {
    let n = sys.n;
    let (a, b) = sys.linearize()?;
    let w = sys.weight_quadratic()?;
    match policy {
        None => Ok(lyap_solve(&a, &w)?),
        Some(u) => {
            let zero = vec![0.0; n];
            let tape = Tape::compile(&u.iter().collect::<Vec<_>>(), n)?;
            let du = tape.eval_dual2(&zero)?;
            let kmat = DMatrix::from_fn(sys.k, n, |l, j| du[l].grad(j));
            let r0 = DMatrix::from_row_slice(sys.k, sys.k, &sys.tape()?.eval(&zero)?.r);
            let acl = &a + &b * &kmat;
            let wcl = &w + kmat.transpose() * &r0 * &kmat;
            Ok(lyap_solve(&acl, &wcl)?)
        }
    }
}

fn quad(p: &DMatrix<f64>, x: &[f64]) -> f64 {
    let n = x.len();
    (0..n)
        .map(|i| (0..n).map(|j| x[i] * p[(i, j)] * x[j]).sum::<f64>())
        .sum()
}

fn value_from(traj: &Trajectory, p: &DMatrix<f64>, x0: &[f64], cfg: &OracleConfig) -> Result<OracleValue, OracleError> {
    if traj.termination != Termination::Converged {
        return Err(OracleError::NotConverged {
            x0: x0.to_vec(),
            reason: traj.termination,
        });
    }
    let tail = quad(p, traj.last()).max(0.0);
    Ok(OracleValue {
        value: traj.cost + tail,
        tail,
        stop_radius: cfg.stop_radius,
    })
}

/// `V(x) = ∫₀^∞ ω(φ(t, x)) dt`, truncated in the stop ball and completed by
/// the cost of the linearized flow.
pub fn true_value(sys: &SystemModel, x: &[f64], cfg: &OracleConfig) -> Result<OracleValue, OracleError> {
    if sys.mode() != Mode::Lyapunov {
        return Err(OracleError::Mode(Mode::Lyapunov));
    }
    let p = tail_matrix(sys, None)?;
    let traj = integrate(sys, x, None, cfg)?;
    value_from(&traj, &p, x, cfg)
}

/// Closed-loop cost `J(x, û)` of the policy induced by `v`.
pub fn policy_cost(
    sys: &SystemModel,
    v: &impl ValueFunction,
    x: &[f64],
    cfg: &OracleConfig,
) -> Result<OracleValue, OracleError> {
    let bundle = build_hjb_residual(sys, v)?;
    let p = tail_matrix(sys, Some(&bundle.policy))?;
    let traj = integrate(sys, x, Some(&bundle.policy), cfg)?;
    value_from(&traj, &p, x, cfg)
}

// ---------------------------------------------------------------------------
// bound checks

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub point: Vec<f64>,
    pub v_hat: f64,
    /// Oracle value `V(x)` or closed-loop cost `J(x, û)`.
    pub oracle: f64,
    pub tol: f64,
    /// Smallest margin over the inequalities checked at this point;
    /// negative means a violation.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub epsilon: f64,
    pub rows: Vec<CheckRow>,
    /// Start points whose trajectory left the domain or never converged.
    pub excluded: Vec<Vec<f64>>,
    pub violations: usize,
    /// `max |V̂ − V| / V` over the rows.
    pub max_relative_error: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    pub fn min_slack(&self) -> f64 {
        self.rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min)
    }

    pub fn worst(&self) -> Option<&CheckRow> {
        self.rows.iter().min_by(|a, b| a.slack.total_cmp(&b.slack))
    }

    /// CSV with one row per point.
    pub fn to_csv(&self) -> String {
        let n = self.rows.first().map_or(0, |r| r.point.len());
        let mut s: String = (1..=n).map(|i| format!("x{i},")).collect();
        s.push_str("v_hat,oracle,tol,slack\n");
        for r in &self.rows {
            for x in &r.point {
                s.push_str(&format!("{x:e},"));
            }
            s.push_str(&format!("{:e},{:e},{:e},{:e}\n", r.v_hat, r.oracle, r.tol, r.slack));
        }
        s
    }

    fn finish(epsilon: f64, rows: Vec<CheckRow>, excluded: Vec<Vec<f64>>) -> Self {
        let violations = rows.iter().filter(|r| r.slack < 0.0).count();
        let max_relative_error = rows
            .iter()
            .filter(|r| r.oracle > 0.0)
            .map(|r| (r.v_hat - r.oracle).abs() / r.oracle)
            .fold(0.0, f64::max);
        Self {
            epsilon,
            rows,
            excluded,
            violations,
            max_relative_error,
        }
    }
}

fn certified_eps(cert: &Certificate) -> Result<f64, OracleError> {
    if cert.is_certified() {
        Ok(cert.epsilon)
    } else {
        Err(OracleError::Uncertified)
    }
}

/// Checks `|V̂ − V| ≤ εV + tol` and `|V̂ − V| ≤ ε/(1−ε)·V̂ + tol` at each
/// point, with `tol = 10·(rtol·V + tail)`. Points whose trajectories leave
/// the domain are excluded and listed.
pub fn check_theorem1(
    sys: &SystemModel,
    v: &impl ValueFunction,
    cert: &Certificate,
    points: &[Vec<f64>],
    cfg: &OracleConfig,
) -> Result<CheckReport, OracleError> {
    let eps = certified_eps(cert)?;
    check_theorem1_eps(sys, v, eps, points, cfg)
}

/// [`check_theorem1`] for an explicit ε.
pub fn check_theorem1_eps(
    sys: &SystemModel,
    v: &impl ValueFunction,
    eps: f64,
    points: &[Vec<f64>],
    cfg: &OracleConfig,
) -> Result<CheckReport, OracleError> {
    if sys.mode() != Mode::Lyapunov {
        return Err(OracleError::Mode(Mode::Lyapunov));
    }
    let value = Tape::compile_one(&v.value_expr(), sys.n)?;
    let p = tail_matrix(sys, None)?;
    let results: Vec<Result<Option<CheckRow>, OracleError>> = points
        .par_iter()
        .map(|x| {
            let v_hat = value.eval_point(x)?[0];
            let mut flow = Flow::new(sys, None)?;
            let traj = run(sys, &mut flow, x, cfg)?;
            if traj.termination != Termination::Converged {
                return Ok(None);
            }
            let o = value_from(&traj, &p, x, cfg)?;
            let tol = 10.0 * (cfg.rtol * o.value + o.tail);
            let err = (v_hat - o.value).abs();
            let slack = (eps * o.value + tol - err).min(eps / (1.0 - eps) * v_hat + tol - err);
            Ok(Some(CheckRow {
                point: x.clone(),
                v_hat,
                oracle: o.value,
                tol,
                slack,
            }))
        })
        .collect();
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for (x, r) in points.iter().zip(results) {
        match r? {
            Some(row) => rows.push(row),
            None => excluded.push(x.clone()),
        }
    }
    Ok(CheckReport::finish(eps, rows, excluded))
}

/// Checks the decrease condition `DV̂·f ≤ −(1−ε)ω` by direct evaluation.
/// Slack is `−(1−ε)ω − DV̂·f`.
pub fn check_decrease(
    sys: &SystemModel,
    v: &impl ValueFunction,
    eps: f64,
    points: &[Vec<f64>],
) -> Result<CheckReport, OracleError> {
    if sys.mode() != Mode::Lyapunov {
        return Err(OracleError::Mode(Mode::Lyapunov));
    }
    let n = sys.n;
    let value = Tape::compile_one(&v.value_expr(), n)?;
    let st = sys.tape()?;
    let mut rows = Vec::with_capacity(points.len());
    for x in points {
        let d = value.eval_dual2(x)?;
        let vals = st.eval(x)?;
        let lie: f64 = (0..n).map(|j| d[0].grad(j) * vals.f[j]).sum();
        rows.push(CheckRow {
            point: x.clone(),
            v_hat: d[0].v,
            oracle: lie,
            tol: 0.0,
            slack: -(1.0 - eps) * vals.weight - lie,
        });
    }
    let mut report = CheckReport::finish(eps, rows, Vec::new());
    report.max_relative_error = 0.0;
    Ok(report)
}

/// Closed-loop checks of the HJB bounds on the certified sublevel set
/// `{V̂ ≤ c}`: `J ≤ V̂/(1−ε) + tol`, `J ≥ V̂/(1+ε) − tol` (since `J ≥ V*`)
/// and `(1−ε)J ≤ V̂/(1−ε) + tol`, with `tol = 10·(rtol·J + tail)`.
///
/// Points outside the sublevel set are excluded. A start point whose closed
/// loop fails to converge is a violation.
pub fn check_theorem2(
    sys: &SystemModel,
    v: &impl ValueFunction,
    cert: &Certificate,
    c: Option<f64>,
    points: &[Vec<f64>],
    cfg: &OracleConfig,
) -> Result<CheckReport, OracleError> {
    let eps = certified_eps(cert)?;
    check_theorem2_eps(sys, v, eps, c, points, cfg)
}

/// [`check_theorem2`] for an explicit ε.
pub fn check_theorem2_eps(
    sys: &SystemModel,
    v: &impl ValueFunction,
    eps: f64,
    c: Option<f64>,
    points: &[Vec<f64>],
    cfg: &OracleConfig,
) -> Result<CheckReport, OracleError> {
    if sys.mode() != Mode::Hjb {
        return Err(OracleError::Mode(Mode::Hjb));
    }
    let bundle = build_hjb_residual(sys, v)?;
    let value = Tape::compile_one(&bundle.value, sys.n)?;
    let p = tail_matrix(sys, Some(&bundle.policy))?;
    let results: Vec<Result<Option<CheckRow>, OracleError>> = points
        .par_iter()
        .map(|x| {
            let v_hat = value.eval_point(x)?[0];
            if c.is_some_and(|c| v_hat > c) {
                return Ok(None);
            }
            let mut flow = Flow::new(sys, Some(&bundle.policy))?;
            let traj = run(sys, &mut flow, x, cfg)?;
            if traj.termination != Termination::Converged {
                return Ok(Some(CheckRow {
                    point: x.clone(),
                    v_hat,
                    oracle: f64::INFINITY,
                    tol: 0.0,
                    slack: f64::NEG_INFINITY,
                }));
            }
            let o = value_from(&traj, &p, x, cfg)?;
            let j = o.value;
            let tol = 10.0 * (cfg.rtol * j + o.tail);
            let upper = v_hat / (1.0 - eps) + tol - j;
            let lower = j - v_hat / (1.0 + eps) + tol;
            let chain = v_hat / (1.0 - eps) + tol - (1.0 - eps) * j;
            Ok(Some(CheckRow {
                point: x.clone(),
                v_hat,
                oracle: j,
                tol,
                slack: upper.min(lower).min(chain),
            }))
        })
        .collect();
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for (x, r) in points.iter().zip(results) {
        match r? {
            Some(row) => rows.push(row),
            None => excluded.push(x.clone()),
        }
    }
    Ok(CheckReport::finish(eps, rows, excluded))
}

/// `|V̂ − V*| ≤ ε·V* + tol` against a known optimal value.
pub fn check_against_reference(
    v: &impl ValueFunction,
    reference: impl Fn(&[f64]) -> f64,
    eps: f64,
    tol: f64,
    points: &[Vec<f64>],
) -> Result<CheckReport, OracleError> {
    let value = Tape::compile_one(&v.value_expr(), v.dim())?;
    let mut rows = Vec::with_capacity(points.len());
    for x in points {
        let v_hat = value.eval_point(x)?[0];
        let vs = reference(x);
        rows.push(CheckRow {
            point: x.clone(),
            v_hat,
            oracle: vs,
            tol,
            slack: eps * vs + tol - (v_hat - vs).abs(),
        });
    }
    Ok(CheckReport::finish(eps, rows, Vec::new()))
}

/// Uniform tensor grid with `per_dim` points per axis, endpoints included.
pub fn uniform_grid(domain: &crate::interval::IntervalBox<f64>, per_dim: usize) -> Vec<Vec<f64>> {
    let n = domain.dim();
    let total = per_dim.pow(n as u32);
    (0..total)
        .map(|mut idx| {
            (0..n)
                .map(|d| {
                    let s = domain.side(d);
                    let k = idx % per_dim;
                    idx /= per_dim;
                    if per_dim == 1 {
                        s.mid()
                    } else {
                        s.lo() + s.width() * k as f64 / (per_dim - 1) as f64
                    }
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::residual::ExprValue;
    use crate::system::bundled;

    #[test]
    fn scalar_decay() {
        let sys = bundled("scalar_exp").unwrap();
        let cfg = OracleConfig {
            stop_radius: 1e-12,
            t_max: 1.0,
            ..Default::default()
        };
        let tr = integrate(&sys, &[0.5], None, &cfg).unwrap();
        assert_eq!(tr.termination, Termination::TimeLimit);
        assert!((tr.last()[0] - 0.5 * (-1.0f64).exp()).abs() < 1e-9);
        let v = true_value(&sys, &[0.4], &OracleConfig::default()).unwrap();
        assert!((v.value - 0.08).abs() < 1e-6, "{v:?}");
        assert_eq!(true_value(&sys, &[0.0], &OracleConfig::default()).unwrap().value, 0.0);
    }

    #[test]
    fn linear_matches_lyapunov_matrix() {
        let sys = bundled("linear2d_lyap").unwrap();
        let p = [1.25, 0.25, 0.25, 0.25];
        for x in [[0.5, -0.3], [-0.9, 0.9], [0.1, 0.0]] {
            let v = true_value(&sys, &x, &OracleConfig::default()).unwrap();
            let exact = p[0] * x[0] * x[0] + 2.0 * p[1] * x[0] * x[1] + p[3] * x[1] * x[1];
            assert!((v.value - exact).abs() <= 1e-6 * exact, "{x:?}: {} vs {exact}", v.value);
        }
    }

    #[test]
    fn lqr_policy_cost_of_riccati_value() {
        let sys = bundled("lqr_di").unwrap();
        let s3 = 3f64.sqrt();
        let q = ExprValue::quadratic(&[s3, 1.0, 1.0, s3], 2);
        for x in [[0.4, -0.2], [-0.5, 0.5]] {
            let j = policy_cost(&sys, &q, &x, &OracleConfig::default()).unwrap();
            let exact = s3 * x[0] * x[0] + 2.0 * x[0] * x[1] + s3 * x[1] * x[1];
            assert!((j.value - exact).abs() <= 1e-5 * exact, "{} vs {exact}", j.value);
        }
    }

    #[test]
    fn zero_policy_on_upright_pendulum_falls() {
        let sys = bundled("pendulum_hjb").unwrap();
        let zero = vec![Expr::Const(0.0)];
        let tr = integrate(&sys, &[0.5, 0.0], Some(&zero), &OracleConfig::default()).unwrap();
        assert_eq!(tr.termination, Termination::LeftDomain);
    }

    #[test]
    fn grid_shape() {
        let g = uniform_grid(&crate::interval::IntervalBox::cube(2, 1.0), 3);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], vec![-1.0, -1.0]);
        assert_eq!(g[4], vec![0.0, 0.0]);
    }
}
