//! Least-squares collocation training of the output layer.
//!
//! Both PDEs are linear in the output weights once the control is frozen,
//! so Lyapunov training is one regularized least-squares solve and HJB
//! training alternates such solves with policy updates.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::EvalError;
use crate::interval::IntervalBox;
use crate::linalg::{riccati_solve, LinalgError};
use crate::net::ValueNet64;
use crate::system::{Mode, SystemModel, SystemTape, SystemValues};

/// Upper bound on the number of collocation points.
pub const MAX_COLLOCATION: usize = 4_000_000;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("collocation count {0} exceeds the budget of {MAX_COLLOCATION} points")]
    Budget(usize),
    #[error("collocation count must be positive")]
    Empty,
    #[error("system is in {found:?} mode, expected {expected:?}")]
    Mode { expected: Mode, found: Mode },
    #[error("net has input dimension {net}, system has {system}")]
    Dimension { net: usize, system: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("rank-deficient least-squares system without ridge (σ_min/σ_max = {0:.3e})")]
    RankDeficient(f64),
    #[error("LQR initialization failed: {0}")]
    Lqr(LinalgError),
    #[error("policy iteration diverged at iteration {iter} (RMS residual {rms:.3e})")]
    Divergent { iter: usize, rms: f64 },
    #[error("R(x) is singular at a collocation point")]
    SingularR,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollocationKind {
    Grid,
    Halton,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSet {
    pub points: Vec<Vec<f64>>,
    pub kind: CollocationKind,
    pub seed: u64,
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

/// Collocation points in `domain`.
///
/// `Grid` builds the largest tensor grid with at most `count` points
/// (endpoints included); `Halton` uses indices `seed + 1 ..= seed + count`.
pub fn make_collocation(
    domain: &IntervalBox<f64>,
    count: usize,
    kind: CollocationKind,
    seed: u64,
) -> Result<CollocationSet, TrainError> {
    if count == 0 {
        return Err(TrainError::Empty);
    }
    if count > MAX_COLLOCATION {
        return Err(TrainError::Budget(count));
    }
    let n = domain.dim();
    let points = match kind {
        CollocationKind::Grid => {
            let mut k = (count as f64).powf(1.0 / n as f64).round() as usize;
            while k.pow(n as u32) > count {
                k -= 1;
            }
            let k = k.max(1);
            let coord = |d: usize, j: usize| {
                let s = domain.side(d);
                if k == 1 {
                    s.mid()
                } else if j == k - 1 {
                    s.hi()
                } else {
                    s.lo() + s.width() * j as f64 / (k - 1) as f64
                }
            };
            (0..k.pow(n as u32))
                .map(|mut idx| {
                    (0..n)
                        .map(|d| {
                            let j = idx % k;
                            idx /= k;
                            coord(d, j)
                        })
                        .collect()
                })
                .collect()
        }
        CollocationKind::Halton => {
            assert!(
                n <= PRIMES.len(),
                "Halton sequence supports up to {} dimensions",
                PRIMES.len()
            );
            (0..count as u64)
                .map(|i| {
                    (0..n)
                        .map(|d| {
                            let s = domain.side(d);
                            (s.lo() + s.width() * radical_inverse(seed + 1 + i, PRIMES[d])).min(s.hi())
                        })
                        .collect()
                })
                .collect()
        }
    };
    Ok(CollocationSet { points, kind, seed })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// `None` selects `1e-10 · trace(ΦᵀΦ) / m`.
    pub ridge: Option<f64>,
    /// Scale each collocation row by `1 / weight(x)`, fitting the relative residual.
    pub relative: bool,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            ridge: None,
            relative: false,
            max_iters: 30,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub max_residual: f64,
    pub rms_residual: f64,
    /// `max |r| / weight` over collocation points away from the origin.
    pub max_relative: f64,
    pub w_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: Mode,
    pub points: usize,
    pub ridge: f64,
    pub solver: String,
    pub condition_estimate: f64,
    pub converged: bool,
    pub iterations: Vec<IterationStats>,
    pub final_w_change: f64,
}

struct Solve {
    w: DVector<f64>,
    ridge: f64,
    solver: &'static str,
    cond: f64,
}

/// `argmin ‖Φw − y‖² + λ‖w‖²`; Cholesky when well conditioned, SVD filter otherwise.
fn least_squares(phi: &DMatrix<f64>, y: &DVector<f64>, ridge: Option<f64>) -> Result<Solve, TrainError> {
    let m = phi.ncols();
    let gram = phi.tr_mul(phi);
    let lambda = ridge.unwrap_or_else(|| 1e-10 * gram.trace() / m as f64);
    let rhs = phi.tr_mul(y);
    if let Some(ch) = (&gram + DMatrix::identity(m, m) * lambda).cholesky() {
        let d = ch.l_dirty().diagonal();
        let (lo, hi) = d
            .iter()
            .fold((f64::INFINITY, 0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let cond = (hi / lo).powi(2);
        if cond < 1e8 {
            return Ok(Solve {
                w: ch.solve(&rhs),
                ridge: lambda,
                solver: "cholesky",
                cond,
            });
        }
    }
    // orthogonal route: Φ = QR, then SVD of R
    let (r, qty) = if phi.nrows() >= m {
        let qr = phi.clone().qr();
        let mut qty = y.clone();
        qr.q_tr_mul(&mut qty);
        (qr.r(), qty.rows(0, m).into_owned())
    } else {
        (phi.clone(), y.clone())
    };
    let svd = r.svd(true, true);
    let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if lambda == 0.0 && smin <= f64::EPSILON * smax * phi.nrows().max(m) as f64 {
        return Err(TrainError::RankDeficient(smin / smax));
    }
    let uty = u.tr_mul(&qty);
    let mut coef = DVector::zeros(svd.singular_values.len());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > 0.0 {
            coef[i] = s / (s * s + lambda) * uty[i];
        }
    }
    Ok(Solve {
        w: vt.tr_mul(&coef),
        ridge: lambda,
        solver: "svd",
        cond: (smax / smin).powi(2),
    })
}

fn check_mode(sys: &SystemModel, net: &ValueNet64, expected: Mode) -> Result<(), TrainError> {
    if sys.mode() != expected {
        return Err(TrainError::Mode {
            expected,
            found: sys.mode(),
        });
    }
    if net.n != sys.n {
        return Err(TrainError::Dimension {
            net: net.n,
            system: sys.n,
        });
    }
    Ok(())
}

fn eval_points(tape: &SystemTape, pts: &CollocationSet) -> Result<Vec<SystemValues>, TrainError> {
    pts.points
        .par_iter()
        .map_init(Vec::new, |buf, x| tape.eval_buf(x, buf))
        .collect::<Result<Vec<_>, _>>()
        .map_err(TrainError::from)
}

/// Row of the design matrix: `φᵢ = (sech²(aᵢ·x + bᵢ) − sech²(bᵢ)) (aᵢ·d)`.
fn feature_row(net: &ValueNet64, sech0: &[f64], x: &[f64], dir: &[f64], out: &mut [f64]) {
    let z = net.preactivations(x);
    for i in 0..net.m {
        let t = z[i].tanh();
        let ad: f64 = net.row(i).iter().zip(dir).map(|(a, d)| a * d).sum();
        out[i] = ((1.0 - t * t) - sech0[i]) * ad;
    }
}

/// Solves the collocation system `DV̂(xⱼ)·dⱼ = targetⱼ` for the output weights.
fn fit(
    net: &ValueNet64,
    pts: &CollocationSet,
    dirs: &[Vec<f64>],
    target: &[f64],
    row_scale: &[f64],
    cfg: &TrainConfig,
) -> Result<Solve, TrainError> {
    let sech0 = net.sech2_at_origin();
    let m = net.m;
    let rows: Vec<Vec<f64>> = (0..pts.points.len())
        .into_par_iter()
        .map(|j| {
            let mut row = vec![0.0; m];
            feature_row(net, &sech0, &pts.points[j], &dirs[j], &mut row);
            row.iter_mut().for_each(|v| *v *= row_scale[j]);
            row
        })
        .collect();
    let phi = DMatrix::from_fn(rows.len(), m, |r, c| rows[r][c]);
    let y = DVector::from_fn(rows.len(), |r, _| target[r] * row_scale[r]);
    least_squares(&phi, &y, cfg.ridge)
}

fn row_scales(values: &[SystemValues], relative: bool) -> Vec<f64> {
    values
        .iter()
        .map(|v| match relative {
            // the origin contributes nothing to either side
            true if v.weight > 0.0 => 1.0 / v.weight,
            true => 0.0,
            false => 1.0,
        })
        .collect()
}

fn stats(iteration: usize, residuals: &[f64], weights: &[f64], w_change: f64) -> IterationStats {
    let max = residuals.iter().fold(0f64, |a, r| a.max(r.abs()));
    let rms = (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt();
    let max_relative = residuals
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .fold(0f64, |a, (r, w)| a.max(r.abs() / w));
    IterationStats {
        iteration,
        max_residual: max,
        rms_residual: rms.min(max),
        max_relative,
        w_change,
    }
}

/// Lyapunov residual `DV̂·f + ω` of the corrected net at each point.
pub fn lyapunov_residuals(net: &ValueNet64, values: &[SystemValues], pts: &CollocationSet) -> Vec<f64> {
    pts.points
        .par_iter()
        .zip(values)
        .map(|(x, v)| {
            let (_, g) = net.value_and_grad(x);
            g.iter().zip(&v.f).map(|(a, b)| a * b).sum::<f64>() + v.weight
        })
        .collect()
}

fn set_weights(net: &ValueNet64, w: &DVector<f64>) -> (ValueNet64, f64) {
    let mut out = net.clone();
    let change = out
        .w
        .iter()
        .zip(w.iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    out.w = w.iter().copied().collect();
    out.refresh_correction();
    (out, change)
}

/// One least-squares solve of `DV̂·f = −ω` at the collocation points.
pub fn train_lyapunov(
    sys: &SystemModel,
    net: &ValueNet64,
    pts: &CollocationSet,
    cfg: &TrainConfig,
) -> Result<(ValueNet64, TrainReport), TrainError> {
    check_mode(sys, net, Mode::Lyapunov)?;
    let tape = sys.tape()?;
    let values = eval_points(&tape, pts)?;
    let dirs: Vec<Vec<f64>> = values.iter().map(|v| v.f.clone()).collect();
    let target: Vec<f64> = values.iter().map(|v| -v.weight).collect();
    let scales = row_scales(&values, cfg.relative);
    let sol = fit(net, pts, &dirs, &target, &scales, cfg)?;
    let (trained, change) = set_weights(net, &sol.w);
    let weights: Vec<f64> = values.iter().map(|v| v.weight).collect();
    let res = lyapunov_residuals(&trained, &values, pts);
    Ok((
        trained,
        TrainReport {
            mode: Mode::Lyapunov,
            points: pts.points.len(),
            ridge: sol.ridge,
            solver: sol.solver.into(),
            condition_estimate: sol.cond,
            converged: true,
            iterations: vec![stats(1, &res, &weights, change)],
            final_w_change: change,
        },
    ))
}

fn small_inverse(r: &[f64], k: usize) -> Option<DMatrix<f64>> {
    DMatrix::from_row_slice(k, k, r).try_inverse()
}

/// `−½ R⁻¹ gᵀ ∇V̂` at a point.
fn policy_at(grad: &[f64], v: &SystemValues, n: usize, k: usize) -> Result<Vec<f64>, TrainError> {
    let rinv = small_inverse(&v.r, k).ok_or(TrainError::SingularR)?;
    let gtp: Vec<f64> = (0..k).map(|l| (0..n).map(|j| v.g[j * k + l] * grad[j]).sum()).collect();
    Ok((0..k)
        .map(|l| -0.5 * (0..k).map(|c| rinv[(l, c)] * gtp[c]).sum::<f64>())
        .collect())
}

/// Reduced HJB residual `Q + DV̂·f − ¼ DV̂ g R⁻¹ gᵀ DV̂ᵀ` at a point.
pub fn hjb_residual_at(grad: &[f64], v: &SystemValues, n: usize, k: usize) -> Result<f64, TrainError> {
    let u = policy_at(grad, v, n, k)?;
    let df: f64 = grad.iter().zip(&v.f).map(|(a, b)| a * b).sum();
    // with u = −½R⁻¹gᵀp the quadratic term equals uᵀRu
    let uru: f64 = (0..k)
        .map(|l| (0..k).map(|c| u[l] * v.r[l * k + c] * u[c]).sum::<f64>())
        .sum();
    Ok(v.weight + df - uru)
}

fn hjb_residuals(
    net: &ValueNet64,
    values: &[SystemValues],
    pts: &CollocationSet,
    k: usize,
) -> Result<Vec<f64>, TrainError> {
    pts.points
        .par_iter()
        .zip(values)
        .map(|(x, v)| hjb_residual_at(&net.value_and_grad(x).1, v, net.n, k))
        .collect()
}

/// Policy iteration on the generalized HJB equation, started from the LQR
/// policy of the linearization.
pub fn train_hjb(
    sys: &SystemModel,
    net: &ValueNet64,
    pts: &CollocationSet,
    cfg: &TrainConfig,
) -> Result<(ValueNet64, TrainReport), TrainError> {
    check_mode(sys, net, Mode::Hjb)?;
    let (n, k) = (sys.n, sys.k);
    let tape = sys.tape()?;
    let values = eval_points(&tape, pts)?;
    let weights: Vec<f64> = values.iter().map(|v| v.weight).collect();
    let scales = row_scales(&values, cfg.relative);

    let (a, b) = sys.linearize()?;
    let qm = sys.weight_quadratic()?;
    let r0 = tape.eval(&vec![0.0; n])?.r;
    let rm = DMatrix::from_row_slice(k, k, &r0);
    let p = riccati_solve(&a, &b, &qm, &rm).map_err(TrainError::Lqr)?;
    let gain = rm.try_inverse().ok_or(TrainError::SingularR)? * b.transpose() * p;
    let mut policy: Vec<Vec<f64>> = pts
        .points
        .iter()
        .map(|x| {
            (0..k)
                .map(|l| -(0..n).map(|j| gain[(l, j)] * x[j]).sum::<f64>())
                .collect()
        })
        .collect();

    let mut current = net.clone();
    let mut prev_values: Option<Vec<f64>> = None;
    let mut iterations = Vec::new();
    let mut last = (0.0, 0.0, String::new());
    let mut converged = false;
    for iter in 1..=cfg.max_iters.max(1) {
        let mut dirs = Vec::with_capacity(values.len());
        let mut target = Vec::with_capacity(values.len());
        for (v, u) in values.iter().zip(&policy) {
            dirs.push(
                (0..n)
                    .map(|j| v.f[j] + (0..k).map(|l| v.g[j * k + l] * u[l]).sum::<f64>())
                    .collect::<Vec<_>>(),
            );
            let uru: f64 = (0..k)
                .map(|l| (0..k).map(|c| u[l] * v.r[l * k + c] * u[c]).sum::<f64>())
                .sum();
            target.push(-(v.weight + uru));
        }
        let sol = fit(&current, pts, &dirs, &target, &scales, cfg)?;
        let (next, change) = set_weights(&current, &sol.w);
        last = (sol.ridge, sol.cond, sol.solver.to_string());
        let res = hjb_residuals(&next, &values, pts, k)?;
        let st = stats(iter, &res, &weights, change);
        let vals: Vec<f64> = pts.points.par_iter().map(|x| next.value(x)).collect();
        let delta = prev_values
            .as_ref()
            .map(|pv| pv.iter().zip(&vals).fold(0f64, |acc, (a, b)| acc.max((a - b).abs())));
        if iterations.len() >= 3 {
            let earlier: &IterationStats = &iterations[iterations.len() - 3];
            if st.rms_residual > 10.0 * earlier.rms_residual && st.rms_residual > 1e-12 {
                return Err(TrainError::Divergent {
                    iter,
                    rms: st.rms_residual,
                });
            }
        }
        iterations.push(st);
        policy = pts
            .points
            .iter()
            .zip(&values)
            .map(|(x, v)| policy_at(&next.value_and_grad(x).1, v, n, k))
            .collect::<Result<_, _>>()?;
        current = next;
        prev_values = Some(vals);
        if delta.is_some_and(|d| d < cfg.tol) {
            converged = true;
            break;
        }
    }
    let final_w_change = iterations.last().map_or(0.0, |s| s.w_change);
    Ok((
        current,
        TrainReport {
            mode: Mode::Hjb,
            points: pts.points.len(),
            ridge: last.0,
            solver: last.2,
            condition_estimate: last.1,
            converged,
            iterations,
            final_w_change,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_and_halton() {
        let d = IntervalBox::cube(2, 1.0);
        let g = make_collocation(&d, 9, CollocationKind::Grid, 0).unwrap();
        assert_eq!(g.points.len(), 9);
        assert!(g.points.contains(&vec![-1.0, -1.0]));
        assert!(g.points.contains(&vec![1.0, 1.0]));
        assert!(g.points.contains(&vec![0.0, 0.0]));
        let h = make_collocation(&d, 100, CollocationKind::Halton, 7).unwrap();
        assert_eq!(h, make_collocation(&d, 100, CollocationKind::Halton, 7).unwrap());
        assert!(h.points.iter().all(|p| d.contains(p)));
        assert!(matches!(
            make_collocation(&d, MAX_COLLOCATION + 1, CollocationKind::Halton, 0),
            Err(TrainError::Budget(_))
        ));
    }

    #[test]
    fn radical_inverse_base2() {
        let v: Vec<f64> = (1..5).map(|i| radical_inverse(i, 2)).collect();
        assert_eq!(v, vec![0.5, 0.25, 0.75, 0.125]);
    }
}
