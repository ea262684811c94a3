//! Interval branch-and-bound proofs of residual inequalities.
//!
//! Every proof has the shape "G ≤ 0 on a region". Boxes are processed level
//! by level: each level is evaluated in parallel and its results are merged
//! in box order, so statistics and verdicts do not depend on the number of
//! worker threads.

mod enclose;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{EvalError, Expr, Tape};
use crate::interval::{Interval, IntervalBox};
use crate::residual::{ResidualBundle, ValueFunction};
use crate::scalar::Scalar;
use crate::system::SystemModel;

use enclose::{frobenius_sq_down, frobenius_sq_up, interval_cholesky_pd, Encloser, Scratch};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BnbConfig {
    /// Boxes examined per proof before giving up.
    pub max_boxes: u64,
    pub max_depth: u32,
    /// Boxes narrower than this are not split further.
    pub min_box_width: f64,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for BnbConfig {
    fn default() -> Self {
        Self {
            max_boxes: 4_000_000,
            max_depth: 64,
            min_box_width: 1e-12,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertMode {
    Goal,
    TwoSided,
    OneSided,
    HessianInner,
    QuadLowerBound,
    SublevelSep,
    LocalPd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Status {
    Certified,
    /// `lower_bound > 0` is a rigorous lower bound of the goal on the
    /// witness box, or at the witness point when the box test was inconclusive.
    Refuted {
        witness_box: Vec<[f64; 2]>,
        witness_point: Vec<f64>,
        lower_bound: f64,
    },
    BudgetExhausted {
        reason: String,
    },
    /// The sufficient condition used on part of the region failed, without
    /// a counterexample to the goal itself.
    Inconclusive {
        reason: String,
    },
}

impl Status {
    pub fn is_certified(&self) -> bool {
        matches!(self, Status::Certified)
    }

    pub fn is_refuted(&self) -> bool {
        matches!(self, Status::Refuted { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub probes: usize,
    pub total_boxes: u64,
    pub sampled_lower_estimate: f64,
    /// Certified bound on `‖∇²r‖_F` over the inner cube.
    pub hessian_bound: f64,
    pub bracket: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub mode: CertMode,
    pub epsilon: f64,
    pub rho: f64,
    pub alpha: f64,
    /// Sublevel value `c` when the proof is restricted to `{V̂ ≤ c}`.
    pub level: Option<f64>,
    pub status: Status,
    pub boxes_processed: u64,
    pub max_depth: u32,
    pub wall_time_s: f64,
    pub precision: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parts: Vec<Certificate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchStats>,
}

impl Certificate {
    fn new<T: Scalar>(mode: CertMode, status: Status) -> Self {
        Self {
            mode,
            epsilon: 0.0,
            rho: 0.0,
            alpha: 0.0,
            level: None,
            status,
            boxes_processed: 0,
            max_depth: 0,
            wall_time_s: 0.0,
            precision: std::any::type_name::<T>().to_string(),
            parts: Vec::new(),
            search: None,
        }
    }

    pub fn is_certified(&self) -> bool {
        self.status.is_certified()
    }

    /// Certificate whose verdict is the first non-certified part, if any.
    fn combine<T: Scalar>(mode: CertMode, parts: Vec<Certificate>) -> Self {
        let status = parts
            .iter()
            .find(|p| p.status.is_refuted())
            .or_else(|| parts.iter().find(|p| !p.is_certified()))
            .map_or(Status::Certified, |p| p.status.clone());
        let mut c = Self::new::<T>(mode, status);
        c.boxes_processed = parts.iter().map(|p| p.boxes_processed).sum();
        c.max_depth = parts.iter().map(|p| p.max_depth).max().unwrap_or(0);
        c.wall_time_s = parts.iter().map(|p| p.wall_time_s).sum();
        c.parts = parts;
        c
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

// ---------------------------------------------------------------------------
// engine

pub(crate) enum Test<T> {
    /// Every goal in the mask holds on the box (or the box is out of scope).
    Done,
    /// Goals still open on the box.
    Split(u32),
    Refuted {
        point: Vec<T>,
        lower: T,
        on_box: bool,
    },
}

pub(crate) trait BoxTest<T: Scalar>: Sync {
    fn full_mask(&self) -> u32 {
        1
    }
    fn test(&self, b: &IntervalBox<T>, mask: u32, s: &mut Scratch<T>) -> Test<T>;
}

#[derive(Clone)]
struct Node<T> {
    b: IntervalBox<T>,
    depth: u32,
    mask: u32,
}

enum Verdict<T> {
    Certified,
    Refuted { b: IntervalBox<T>, point: Vec<T>, lower: T },
    Exhausted(String),
}

struct Outcome<T> {
    verdict: Verdict<T>,
    processed: u64,
    max_depth: u32,
    /// Certified leaves, usable as roots of a later, stricter proof.
    leaves: Vec<(IntervalBox<T>, u32)>,
    wall: f64,
}

fn in_pool<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        None => f(),
    }
}

fn run<T: Scalar, B: BoxTest<T>>(test: &B, roots: Vec<(IntervalBox<T>, u32)>, cfg: &BnbConfig) -> Outcome<T> {
    in_pool(cfg.threads, || run_levels(test, roots, cfg))
}

fn run_levels<T: Scalar, B: BoxTest<T>>(test: &B, roots: Vec<(IntervalBox<T>, u32)>, cfg: &BnbConfig) -> Outcome<T> {
    use rayon::prelude::*;
    let start = Instant::now();
    let full = test.full_mask();
    let mut frontier: Vec<Node<T>> = roots
        .into_iter()
        .map(|(b, depth)| Node { b, depth, mask: full })
        .collect();
    let mut processed = 0u64;
    let mut max_depth = 0u32;
    let mut leaves = Vec::new();
    let mut exhausted: Option<String> = None;
    let min_width = T::from_f64_down(cfg.min_box_width);
    while !frontier.is_empty() {
        if processed + frontier.len() as u64 > cfg.max_boxes {
            exhausted = Some(format!(
                "box budget of {} exhausted with {} open boxes",
                cfg.max_boxes,
                frontier.len()
            ));
            break;
        }
        let results: Vec<Test<T>> = frontier
            .par_iter()
            .map_init(Scratch::new, |s, node| test.test(&node.b, node.mask, s))
            .collect();
        processed += frontier.len() as u64;
        let mut next = Vec::new();
        for (node, res) in frontier.into_iter().zip(results) {
            max_depth = max_depth.max(node.depth);
            match res {
                Test::Done => leaves.push((node.b, node.depth)),
                Test::Refuted { point, lower, on_box } => {
                    let b = if on_box { node.b } else { IntervalBox::point(&point) };
                    return Outcome {
                        verdict: Verdict::Refuted { b, point, lower },
                        processed,
                        max_depth,
                        leaves,
                        wall: start.elapsed().as_secs_f64(),
                    };
                }
                Test::Split(mask) => {
                    if node.depth >= cfg.max_depth || node.b.max_width() <= min_width {
                        if exhausted.is_none() {
                            exhausted = Some(format!("box {} cannot be split further", node.b));
                        }
                        continue;
                    }
                    let (l, r) = node.b.bisect(node.b.widest_dim());
                    next.push(Node {
                        b: l,
                        depth: node.depth + 1,
                        mask,
                    });
                    next.push(Node {
                        b: r,
                        depth: node.depth + 1,
                        mask,
                    });
                }
            }
        }
        frontier = next;
    }
    Outcome {
        verdict: match exhausted {
            Some(reason) => Verdict::Exhausted(reason),
            None => Verdict::Certified,
        },
        processed,
        max_depth,
        leaves,
        wall: start.elapsed().as_secs_f64(),
    }
}

fn to_certificate<T: Scalar>(mode: CertMode, out: &Outcome<T>) -> Certificate {
    let status = match &out.verdict {
        Verdict::Certified => Status::Certified,
        Verdict::Refuted { b, point, lower } => Status::Refuted {
            witness_box: b
                .sides()
                .iter()
                .map(|s| [s.lo().to_f64_exact(), s.hi().to_f64_exact()])
                .collect(),
            witness_point: point.iter().map(|v| v.to_f64_exact()).collect(),
            lower_bound: lower.to_f64_exact(),
        },
        Verdict::Exhausted(reason) => Status::BudgetExhausted { reason: reason.clone() },
    };
    let mut c = Certificate::new::<T>(mode, status);
    c.boxes_processed = out.processed;
    c.max_depth = out.max_depth;
    c.wall_time_s = out.wall;
    c
}

// ---------------------------------------------------------------------------
// box tests

/// Proves `G_k ≤ 0` (or `< 0`) for the selected tape outputs.
pub(crate) struct GoalTest<T> {
    enc: Encloser<T>,
    goals: Vec<usize>,
    strict: bool,
    /// Boxes with `max ‖x‖² ≤ skip` are out of scope.
    skip_ball_sq: Option<T>,
    /// `(output, c)`: boxes where that output certainly exceeds `c` are out of scope.
    discharge: Option<(usize, T)>,
}

impl<T: Scalar> GoalTest<T> {
    fn holds(&self, iv: &Interval<T>) -> bool {
        if self.strict {
            iv.hi() < T::zero()
        } else {
            iv.hi() <= T::zero()
        }
    }

    /// Clears the goals proven by `enc`; `Some(lower)` when one is violated on
    /// the whole box.
    fn check(&self, enc: &[Interval<T>], mask: &mut u32, in_scope: bool) -> Option<T> {
        for (k, &o) in self.goals.iter().enumerate() {
            if *mask & (1 << k) == 0 {
                continue;
            }
            if self.holds(&enc[o]) {
                *mask &= !(1 << k);
            } else if in_scope && enc[o].lo() > T::zero() {
                return Some(enc[o].lo());
            }
        }
        None
    }

    fn discharged(&self, enc: &[Interval<T>]) -> bool {
        self.discharge.is_some_and(|(o, c)| enc[o].lo() > c)
    }

    /// Whether the whole enclosure lies in the region of interest.
    fn in_scope(&self, enc: &[Interval<T>]) -> bool {
        self.discharge.is_none_or(|(o, c)| enc[o].hi() <= c)
    }
}

impl<T: Scalar> BoxTest<T> for GoalTest<T> {
    fn full_mask(&self) -> u32 {
        (1u32 << self.goals.len()) - 1
    }

    fn test(&self, b: &IntervalBox<T>, mut mask: u32, s: &mut Scratch<T>) -> Test<T> {
        if let Some(r2) = self.skip_ball_sq {
            if b.max_norm_sq_up() <= r2 {
                return Test::Done;
            }
        }
        let Ok(nat) = self.enc.natural(b, s) else {
            return Test::Split(mask);
        };
        if self.discharged(&nat) {
            return Test::Done;
        }
        if let Some(lower) = self.check(&nat, &mut mask, self.in_scope(&nat)) {
            return Test::Refuted {
                point: b.mid(),
                lower,
                on_box: true,
            };
        }
        if mask == 0 {
            return Test::Done;
        }
        let t3 = self.enc.taylor3(b, &nat, s);
        if self.discharged(&t3) {
            return Test::Done;
        }
        if let Some(lower) = self.check(&t3, &mut mask, self.in_scope(&t3)) {
            return Test::Refuted {
                point: b.mid(),
                lower,
                on_box: true,
            };
        }
        if mask == 0 {
            return Test::Done;
        }
        let m = b.mid();
        // a midpoint inside the skipped ball is no counterexample
        let skipped = self
            .skip_ball_sq
            .is_some_and(|r2| IntervalBox::point(&m).min_norm_sq_down() <= r2);
        if let (false, Ok(at)) = (skipped, self.enc.at_point(&m, s)) {
            if self.in_scope(&at) {
                let mut probe = mask;
                if let Some(lower) = self.check(&at, &mut probe, true) {
                    return Test::Refuted {
                        point: m,
                        lower,
                        on_box: false,
                    };
                }
            }
        }
        Test::Split(mask)
    }
}

/// Proves `‖∇²G‖_F ≤ bound` for output 0.
struct HessianTest<T> {
    enc: Encloser<T>,
    /// Boxes with `min ‖x‖² > ball` are out of scope.
    ball_sq: Option<T>,
    bound_sq_lo: T,
    bound_sq_hi: T,
}

impl<T: Scalar> BoxTest<T> for HessianTest<T> {
    fn test(&self, b: &IntervalBox<T>, mask: u32, s: &mut Scratch<T>) -> Test<T> {
        let n = self.enc.n;
        if self.ball_sq.is_some_and(|r2| b.min_norm_sq_down() > r2) {
            return Test::Done;
        }
        if let Some(h) = self.enc.hessian(0, b, s) {
            if frobenius_sq_up(&h, n) <= self.bound_sq_lo {
                return Test::Done;
            }
        }
        let m = b.mid();
        let estimate = self.enc.hessian_norm_estimate(0, &m, s).unwrap_or(0.0);
        if estimate * estimate > self.bound_sq_hi.to_f64_exact() {
            if let Some(h) = self.enc.hessian(0, &IntervalBox::point(&m), s) {
                let lower = frobenius_sq_down(&h, n);
                if lower > self.bound_sq_hi {
                    return Test::Refuted {
                        point: m,
                        lower,
                        on_box: false,
                    };
                }
            }
        }
        if let Some(h) = self.enc.hessian_taylor(0, b, s) {
            if frobenius_sq_up(&h, n) <= self.bound_sq_lo {
                return Test::Done;
            }
        }
        Test::Split(mask)
    }
}

/// Proves `G ≤ 0` for a goal with `G(0) = 0`, `DG(0) = 0`: either directly,
/// or because `∇²G` is negative definite on the hull of the box and the origin.
struct StarTest<T> {
    enc: Encloser<T>,
}

impl<T: Scalar> BoxTest<T> for StarTest<T> {
    fn test(&self, b: &IntervalBox<T>, mask: u32, s: &mut Scratch<T>) -> Test<T> {
        let n = self.enc.n;
        if let Ok(nat) = self.enc.natural(b, s) {
            if nat[0].hi() <= T::zero() {
                return Test::Done;
            }
            if nat[0].lo() > T::zero() {
                return Test::Refuted {
                    point: b.mid(),
                    lower: nat[0].lo(),
                    on_box: true,
                };
            }
            let t3 = self.enc.taylor3(b, &nat, s);
            if t3[0].hi() <= T::zero() {
                return Test::Done;
            }
        }
        let hull = IntervalBox::new(
            b.sides()
                .iter()
                .map(|side| side.hull(&Interval::point(T::zero())))
                .collect(),
        );
        for h in [self.enc.hessian(0, &hull, s), self.enc.hessian_taylor(0, &hull, s)]
            .into_iter()
            .flatten()
        {
            let neg: Vec<Interval<T>> = h.iter().map(|v| v.neg()).collect();
            if interval_cholesky_pd(&neg, n) {
                return Test::Done;
            }
        }
        let m = b.mid();
        if let Ok(at) = self.enc.at_point(&m, s) {
            if at[0].lo() > T::zero() {
                return Test::Refuted {
                    point: m,
                    lower: at[0].lo(),
                    on_box: false,
                };
            }
        }
        Test::Split(mask)
    }
}

// ---------------------------------------------------------------------------
// tasks

/// Prove `goal ≤ 0` on `region`, ignoring boxes inside the closed ball of
/// radius `excluded_ball_radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyTask {
    pub goal: Expr,
    pub region: IntervalBox<f64>,
    pub excluded_ball_radius: f64,
    /// Require `goal < 0` instead of `goal ≤ 0`.
    pub strict: bool,
}

fn sq_down<T: Scalar>(r: f64) -> T {
    T::from_f64_down(Interval::<f64>::from_f64(r).sqr().lo())
}

fn sq_up<T: Scalar>(r: f64) -> T {
    T::from_f64_up(Interval::<f64>::from_f64(r).sqr().hi())
}

fn roots<T: Scalar>(region: &IntervalBox<f64>) -> Vec<(IntervalBox<T>, u32)> {
    vec![(IntervalBox::from_f64_box(region), 0)]
}

pub fn bnb_prove<T: Scalar>(task: &VerifyTask, cfg: &BnbConfig) -> Result<Certificate, VerifyError> {
    let n = task.region.dim();
    let test = GoalTest {
        enc: Encloser::<T>::new(Tape::compile_one(&task.goal, n)?),
        goals: vec![0],
        strict: task.strict,
        skip_ball_sq: (task.excluded_ball_radius > 0.0).then(|| sq_down(task.excluded_ball_radius)),
        discharge: None,
    };
    let out = run(&test, roots(&task.region), cfg);
    Ok(to_certificate(CertMode::Goal, &out))
}

/// `weight(x) ≥ α‖x‖²` on `[−ρ, ρ]ⁿ`, established by a certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticLowerBound {
    alpha: f64,
    rho: f64,
}

impl QuadraticLowerBound {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Accepts only a certified quadratic-lower-bound certificate.
    pub fn from_certificate(c: &Certificate) -> Result<Self, VerifyError> {
        if c.mode != CertMode::QuadLowerBound || !c.is_certified() {
            return Err(VerifyError::Precondition(
                "quadratic lower bound is not certified".into(),
            ));
        }
        Ok(Self {
            alpha: c.alpha,
            rho: c.rho,
        })
    }
}

fn scaled_norm_sq(c: f64, n: usize) -> Expr {
    Expr::Product(vec![Expr::Const(c), Expr::norm_sq(n)])
}

/// Proves `weight − α‖x‖² ≥ 0` on the bounding box of the ball `B_ρ`.
pub fn verify_quadratic_bound<T: Scalar>(
    weight: &Expr,
    n: usize,
    alpha: f64,
    rho: f64,
    cfg: &BnbConfig,
) -> Result<Certificate, VerifyError> {
    if !(alpha > 0.0 && rho > 0.0) {
        return Err(VerifyError::Precondition("alpha and rho must be positive".into()));
    }
    let goal = Expr::minus(scaled_norm_sq(alpha, n), weight.clone());
    let test = GoalTest {
        enc: Encloser::<T>::new(Tape::compile_one(&goal, n)?),
        goals: vec![0],
        strict: false,
        skip_ball_sq: None,
        discharge: None,
    };
    let out = run(&test, roots(&IntervalBox::cube(n, rho)), cfg);
    let mut c = to_certificate(CertMode::QuadLowerBound, &out);
    c.alpha = alpha;
    c.rho = rho;
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResidualOptions {
    /// Only `r ≤ ε·weight`.
    pub one_sided: bool,
    /// Restrict the outer proof to `{V̂ ≤ c}`.
    pub sublevel: Option<f64>,
}

fn check_origin(bundle: &ResidualBundle) -> Result<(), VerifyError> {
    let n = bundle.n;
    let d = bundle.r.eval_dual2(&vec![0.0f64; n])?;
    let worst = (0..n).fold(d.v.abs(), |a, i| a.max(d.grad(i).abs()));
    if worst > 1e-10 {
        return Err(VerifyError::Precondition(format!(
            "residual and its gradient must vanish at the origin (found {worst:e})"
        )));
    }
    Ok(())
}

fn inner_cube(region: &IntervalBox<f64>, rho: f64) -> Option<IntervalBox<f64>> {
    let sides = region
        .sides()
        .iter()
        .map(|s| s.intersect(&Interval::symmetric(rho)))
        .collect::<Option<Vec<_>>>()?;
    Some(IntervalBox::new(sides))
}

/// How the inner cube `[−ρ, ρ]ⁿ` is handled by a probe.
enum Inner<'a, T> {
    /// Prove `‖∇²r‖_F ≤ 2εα` by branch and bound.
    Prove(&'a mut Option<Vec<(IntervalBox<T>, u32)>>),
    /// Compare against a precomputed Hessian bound.
    Bound(&'a HessianBound),
}

fn outer_test<T: Scalar>(
    bundle: &ResidualBundle,
    eps: f64,
    rho: f64,
    opts: &ResidualOptions,
) -> Result<GoalTest<T>, VerifyError> {
    let eps_w = Expr::Product(vec![Expr::Const(eps), bundle.weight.clone()]);
    let mut outs = vec![Expr::minus(bundle.r.clone(), eps_w.clone())];
    if !opts.one_sided {
        outs.push(Expr::minus(bundle.r.clone().neg(), eps_w));
    }
    let goals: Vec<usize> = (0..outs.len()).collect();
    if opts.sublevel.is_some() {
        outs.push(bundle.value.clone());
    }
    let discharge = opts.sublevel.map(|c| (goals.len(), T::from_f64_up(c)));
    Ok(GoalTest {
        enc: Encloser::new(Tape::compile(&outs.iter().collect::<Vec<_>>(), bundle.n)?),
        goals,
        strict: false,
        skip_ball_sq: Some(sq_down(rho)),
        discharge,
    })
}

/// `2εα` rounded down.
fn hessian_budget(eps: f64, alpha: f64) -> Interval<f64> {
    Interval::<f64>::from_f64(2.0 * eps).mul(&Interval::from_f64(alpha))
}

fn inner_inconclusive(part: &mut Certificate) {
    if let Status::Refuted {
        witness_point,
        lower_bound,
        ..
    } = &part.status
    {
        part.status = Status::Inconclusive {
            reason: format!(
                "squared Hessian norm of the residual reaches {lower_bound:e} at {witness_point:?}, above (2εα)²"
            ),
        };
    }
}

#[allow(clippy::too_many_arguments)]
fn probe<T: Scalar>(
    bundle: &ResidualBundle,
    eps: f64,
    qb: &QuadraticLowerBound,
    region: &IntervalBox<f64>,
    cfg: &BnbConfig,
    opts: &ResidualOptions,
    outer_warm: &mut Option<Vec<(IntervalBox<T>, u32)>>,
    inner: Inner<'_, T>,
) -> Result<Certificate, VerifyError> {
    let n = bundle.n;
    let mut parts = Vec::new();

    // outside B_ρ: ±r − ε·weight ≤ 0
    let test = outer_test::<T>(bundle, eps, qb.rho, opts)?;
    let start = outer_warm.clone().unwrap_or_else(|| roots(region));
    let out = run(&test, start, cfg);
    let mut c = to_certificate(
        if opts.one_sided {
            CertMode::OneSided
        } else {
            CertMode::TwoSided
        },
        &out,
    );
    c.epsilon = eps;
    c.rho = qb.rho;
    c.level = opts.sublevel;
    if matches!(out.verdict, Verdict::Certified) {
        *outer_warm = Some(out.leaves);
    }
    parts.push(c);

    // inside: ‖∇²r‖_F ≤ 2εα on [−ρ, ρ]ⁿ
    if let Some(cube) = inner_cube(region, qb.rho) {
        let budget = hessian_budget(eps, qb.alpha);
        let mut c = match inner {
            Inner::Bound(hb) => {
                let status = if hb.bound <= budget.lo() {
                    Status::Certified
                } else {
                    Status::Inconclusive {
                        reason: format!("Hessian bound {:e} exceeds 2εα = {:e}", hb.bound, budget.lo()),
                    }
                };
                let mut c = Certificate::new::<T>(CertMode::HessianInner, status);
                c.boxes_processed = hb.boxes_processed;
                c.max_depth = hb.max_depth;
                c.wall_time_s = hb.wall_time_s;
                c
            }
            Inner::Prove(warm) => {
                let bound_sq = budget.sqr();
                let test = HessianTest {
                    enc: Encloser::new(Tape::compile_one(&bundle.r, n)?),
                    ball_sq: Some(sq_up(qb.rho)),
                    bound_sq_lo: T::from_f64_down(bound_sq.lo()),
                    bound_sq_hi: T::from_f64_up(bound_sq.hi()),
                };
                let start = warm.clone().unwrap_or_else(|| roots(&cube));
                let out = run(&test, start, cfg);
                let mut c = to_certificate(CertMode::HessianInner, &out);
                inner_inconclusive(&mut c);
                if matches!(out.verdict, Verdict::Certified) {
                    *warm = Some(out.leaves);
                } else if opts.one_sided {
                    // one-sided fallback: ∇²r ≼ 2εα·I on the cube gives r ≤ εα‖x‖²
                    let goal = Expr::minus(bundle.r.clone(), scaled_norm_sq(0.5 * budget.lo(), n));
                    let star = StarTest {
                        enc: Encloser::<T>::new(Tape::compile_one(&goal, n)?),
                    };
                    let out = run(&star, roots(&cube), cfg);
                    let mut alt = to_certificate(CertMode::HessianInner, &out);
                    alt.boxes_processed += c.boxes_processed;
                    alt.wall_time_s += c.wall_time_s;
                    if alt.is_certified() {
                        c = alt;
                    }
                }
                c
            }
        };
        c.epsilon = eps;
        c.rho = qb.rho;
        c.alpha = qb.alpha;
        parts.push(c);
    }
    Ok(finish::<T>(parts, eps, qb, opts))
}

fn finish<T: Scalar>(
    parts: Vec<Certificate>,
    eps: f64,
    qb: &QuadraticLowerBound,
    opts: &ResidualOptions,
) -> Certificate {
    let mode = if opts.one_sided {
        CertMode::OneSided
    } else {
        CertMode::TwoSided
    };
    let mut c = Certificate::combine::<T>(mode, parts);
    c.epsilon = eps;
    c.rho = qb.rho;
    c.alpha = qb.alpha;
    c.level = opts.sublevel;
    c
}

/// Residual bound `|r| ≤ ε·weight` (or `r ≤ ε·weight` when one-sided) on
/// `region`: a Hessian bound on `[−ρ, ρ]ⁿ` plus a direct proof outside `B_ρ`.
pub fn verify_residual<T: Scalar>(
    bundle: &ResidualBundle,
    eps: f64,
    qb: &QuadraticLowerBound,
    region: &IntervalBox<f64>,
    cfg: &BnbConfig,
    opts: &ResidualOptions,
) -> Result<Certificate, VerifyError> {
    if !(0.0..1.0).contains(&eps) {
        return Err(VerifyError::Precondition(format!("eps = {eps} outside [0, 1)")));
    }
    check_origin(bundle)?;
    probe::<T>(bundle, eps, qb, region, cfg, opts, &mut None, Inner::Prove(&mut None))
}

pub fn verify_relative_residual<T: Scalar>(
    bundle: &ResidualBundle,
    eps: f64,
    qb: &QuadraticLowerBound,
    region: &IntervalBox<f64>,
    cfg: &BnbConfig,
) -> Result<Certificate, VerifyError> {
    verify_residual::<T>(bundle, eps, qb, region, cfg, &ResidualOptions::default())
}

pub fn verify_one_sided<T: Scalar>(
    bundle: &ResidualBundle,
    eps: f64,
    qb: &QuadraticLowerBound,
    region: &IntervalBox<f64>,
    cfg: &BnbConfig,
) -> Result<Certificate, VerifyError> {
    let opts = ResidualOptions {
        one_sided: true,
        sublevel: None,
    };
    verify_residual::<T>(bundle, eps, qb, region, cfg, &opts)
}

/// Largest sampled `|r|/weight` (or `r/weight` when one-sided) on a uniform
/// grid of `region`; a lower bound for any certifiable ε.
pub fn sampled_ratio(
    bundle: &ResidualBundle,
    region: &IntervalBox<f64>,
    per_dim: usize,
    opts: &ResidualOptions,
) -> Result<f64, VerifyError> {
    let n = bundle.n;
    let tape = Tape::compile(&[&bundle.r, &bundle.weight, &bundle.value], n)?;
    let total = per_dim.pow(n as u32);
    let mut buf = Vec::new();
    let mut best = 0f64;
    let mut x = vec![0.0; n];
    for mut idx in 0..total {
        for (d, xd) in x.iter_mut().enumerate() {
            let s = region.side(d);
            *xd = s.lo() + s.width() * (idx % per_dim) as f64 / (per_dim - 1).max(1) as f64;
            idx /= per_dim;
        }
        let v = tape.eval_with(&x, &mut buf)?;
        if v[1] <= 0.0 || opts.sublevel.is_some_and(|c| v[2] > c) {
            continue;
        }
        let r = if opts.one_sided { v[0] } else { v[0].abs() };
        best = best.max(r / v[1]);
    }
    Ok(best)
}

/// Certified upper bound on `max ‖∇²h‖_F` over a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianBound {
    /// Rigorous upper bound.
    pub bound: f64,
    /// Largest sampled value, an estimate of the maximum from below.
    pub estimate: f64,
    /// Whether `bound ≤ (1 + rel_tol)·estimate` was reached within budget.
    pub complete: bool,
    pub boxes_processed: u64,
    pub max_depth: u32,
    pub wall_time_s: f64,
}

/// Upper bound on the Frobenius norm of the Hessian of `h` over `region`
/// (intersected with the closed ball of radius `ball`, if given), refined
/// until it is within `rel_tol` of the sampled maximum. Running out of
/// budget still yields a valid, looser bound.
pub fn hessian_frobenius_bound<T: Scalar>(
    h: &Expr,
    region: &IntervalBox<f64>,
    ball: Option<f64>,
    rel_tol: f64,
    cfg: &BnbConfig,
) -> Result<HessianBound, VerifyError> {
    use rayon::prelude::*;
    let enc = Encloser::<T>::new(Tape::compile_one(h, region.dim())?);
    let n = enc.n;
    let start = Instant::now();
    let grow = 1.0 + rel_tol.max(0.0);
    let min_width = T::from_f64_down(cfg.min_box_width);
    let inf = T::from_f64_up(f64::INFINITY);
    let ball_sq: Option<T> = ball.map(sq_up);
    in_pool(cfg.threads, || {
        let mut frontier: Vec<(IntervalBox<T>, u32)> = roots(region);
        let mut estimate = 0f64;
        let mut upper = T::zero();
        let mut processed = 0u64;
        let mut max_depth = 0;
        let mut complete = true;
        while !frontier.is_empty() {
            if processed + frontier.len() as u64 > cfg.max_boxes {
                complete = false;
                break;
            }
            let target = estimate;
            let results: Vec<(T, f64, bool)> = frontier
                .par_iter()
                .map_init(Scratch::new, |s, (b, _)| {
                    if ball_sq.is_some_and(|r2| b.min_norm_sq_down() > r2) {
                        return (T::zero(), 0.0, true);
                    }
                    let est = enc.hessian_norm_estimate(0, &b.mid(), s).unwrap_or(0.0);
                    let goal = T::from_f64_down((grow * target.max(est)).powi(2));
                    let u = enc.hessian_taylor(0, b, s).map_or(inf, |h| frobenius_sq_up(&h, n));
                    (u, est, u <= goal)
                })
                .collect();
            processed += frontier.len() as u64;
            let mut next = Vec::new();
            for ((b, depth), (u, est, done)) in frontier.into_iter().zip(results) {
                max_depth = max_depth.max(depth);
                estimate = estimate.max(est);
                if done {
                    upper = if u > upper { u } else { upper };
                } else if depth >= cfg.max_depth || b.max_width() <= min_width {
                    upper = if u > upper { u } else { upper };
                    complete = false;
                } else {
                    let (l, r) = b.bisect(b.widest_dim());
                    next.push((l, depth + 1));
                    next.push((r, depth + 1));
                }
            }
            frontier = next;
        }
        // open boxes still carry valid enclosures
        if !frontier.is_empty() {
            let mut s = Scratch::new();
            for (b, _) in &frontier {
                let u = enc.hessian_taylor(0, b, &mut s).map_or(inf, |h| frobenius_sq_up(&h, n));
                upper = if u > upper { u } else { upper };
            }
        }
        let bound = Interval::point(upper)
            .sqrt()
            .map_or(f64::INFINITY, |r| r.hi().to_f64_exact());
        Ok(HessianBound {
            bound,
            estimate,
            complete,
            boxes_processed: processed,
            max_depth,
            wall_time_s: start.elapsed().as_secs_f64(),
        })
    })
}

/// Smallest certified ε in `(0, eps_hi]`.
///
/// The inner cube is handled once by a Hessian bound `M`, which certifies
/// every `ε ≥ M/(2α)`. The outer proof is then searched by bisection in log
/// scale between that value (or the sampled residual ratio, if larger) and
/// `eps_hi`, each probe starting from the leaves of the last certified one.
pub fn min_certified_epsilon<T: Scalar>(
    bundle: &ResidualBundle,
    qb: &QuadraticLowerBound,
    region: &IntervalBox<f64>,
    cfg: &BnbConfig,
    eps_hi: f64,
    opts: &ResidualOptions,
) -> Result<(f64, Certificate), VerifyError> {
    if !(eps_hi > 0.0 && eps_hi < 1.0) {
        return Err(VerifyError::Precondition(format!("eps_hi = {eps_hi} outside (0, 1)")));
    }
    check_origin(bundle)?;
    let sampled = sampled_ratio(bundle, region, 201, opts)?;
    let hb = match inner_cube(region, qb.rho) {
        Some(cube) => hessian_frobenius_bound::<T>(&bundle.r, &cube, Some(qb.rho), 0.05, cfg)?,
        None => HessianBound {
            bound: 0.0,
            estimate: 0.0,
            complete: true,
            boxes_processed: 0,
            max_depth: 0,
            wall_time_s: 0.0,
        },
    };
    // smallest ε the inner bound supports, rounded so that 2εα ≥ M holds
    let mut eps_inner = Interval::<f64>::from_f64(hb.bound)
        .div(&Interval::from_f64(2.0 * qb.alpha))
        .map_or(f64::INFINITY, |q| q.hi());
    while hessian_budget(eps_inner, qb.alpha).lo() < hb.bound {
        eps_inner = eps_inner.next_up();
    }
    let floor = sampled.max(eps_inner);
    let mut warm = None;
    let mut total = hb.boxes_processed;
    let mut probes = 0usize;
    let mut attempt = |eps: f64, warm: &mut Option<_>| {
        probes += 1;
        let c = probe::<T>(bundle, eps, qb, region, cfg, opts, warm, Inner::Bound(&hb));
        if let Ok(c) = &c {
            // the inner part only reports the shared Hessian bound
            total += c.parts.first().map_or(0, |p| p.boxes_processed);
        }
        c
    };
    let mut hi = eps_hi;
    let mut lo = floor.min(eps_hi);
    let mut best = attempt(eps_hi, &mut warm)?;
    if best.is_certified() && floor < eps_hi {
        // the floor itself is often certifiable
        let first = if floor > 0.0 { floor } else { eps_hi / 4.0 };
        let c = attempt(first, &mut warm)?;
        if c.is_certified() {
            hi = first;
            lo = first;
            best = c;
        } else {
            lo = first;
        }
        for _ in 0..20 {
            if (hi - lo) / hi < 0.05 {
                break;
            }
            let mid = if lo > 0.0 { (lo * hi).sqrt() } else { hi / 4.0 };
            let c = attempt(mid, &mut warm)?;
            if c.is_certified() {
                hi = mid;
                best = c;
            } else {
                lo = mid;
            }
        }
    }
    best.search = Some(SearchStats {
        probes,
        total_boxes: total,
        sampled_lower_estimate: sampled,
        hessian_bound: hb.bound,
        bracket: [lo, hi],
    });
    Ok((hi, best))
}

/// Proves `V̂ > c` on every face of `domain`, so `{V̂ ≤ c}` stays away from `∂Ω`.
pub fn verify_sublevel_separation<T: Scalar>(
    value: &Expr,
    c: f64,
    domain: &IntervalBox<f64>,
    cfg: &BnbConfig,
) -> Result<Certificate, VerifyError> {
    if !(c > 0.0) {
        return Err(VerifyError::Precondition("level c must be positive".into()));
    }
    let n = domain.dim();
    let goal = Expr::minus(Expr::Const(c), value.clone());
    let mut parts = Vec::new();
    for i in 0..n {
        for end in [domain.side(i).lo(), domain.side(i).hi()] {
            let test = GoalTest {
                enc: Encloser::<T>::new(Tape::compile_one(&goal, n)?),
                goals: vec![0],
                strict: true,
                skip_ball_sq: None,
                discharge: None,
            };
            let out = run(&test, roots::<T>(&domain.with_fixed(i, end)), cfg);
            let mut part = to_certificate(CertMode::SublevelSep, &out);
            part.level = Some(c);
            let ok = part.is_certified();
            parts.push(part);
            if !ok {
                break;
            }
        }
    }
    let mut cert = Certificate::combine::<T>(CertMode::SublevelSep, parts);
    cert.level = Some(c);
    Ok(cert)
}

pub fn verify_sublevel_for_system<T: Scalar>(
    v: &impl ValueFunction,
    c: f64,
    sys: &SystemModel,
    cfg: &BnbConfig,
) -> Result<Certificate, VerifyError> {
    verify_sublevel_separation::<T>(&v.value_expr(), c, &sys.domain, cfg)
}

/// Proves `V̂(x) ≥ β‖x‖²` on `[−ρ, ρ]ⁿ` with `β = λ_min(∇²V̂(0))/4`.
///
/// The certificate's `alpha` field holds β.
pub fn verify_local_pd<T: Scalar>(
    v: &impl ValueFunction,
    rho_pd: f64,
    cfg: &BnbConfig,
) -> Result<Certificate, VerifyError> {
    if !(rho_pd > 0.0) {
        return Err(VerifyError::Precondition("rho_pd must be positive".into()));
    }
    let n = v.dim();
    let value = v.value_expr();
    let d = value.eval_dual2(&vec![0.0f64; n])?;
    let worst = (0..n).fold(d.v.abs(), |a, i| a.max(d.grad(i).abs()));
    if worst > 1e-10 {
        return Err(VerifyError::Precondition(format!(
            "value and gradient must vanish at the origin (found {worst:e})"
        )));
    }
    let h = nalgebra::DMatrix::from_fn(n, n, |i, j| d.hess(i, j));
    let lmin = h.symmetric_eigenvalues().min();
    if !(lmin > 0.0) {
        let mut c = Certificate::new::<T>(
            CertMode::LocalPd,
            Status::Refuted {
                witness_box: vec![[0.0, 0.0]; n],
                witness_point: vec![0.0; n],
                lower_bound: -lmin,
            },
        );
        c.rho = rho_pd;
        return Ok(c);
    }
    let beta = lmin / 4.0;
    let goal = Expr::minus(scaled_norm_sq(beta, n), value);
    let test = StarTest {
        enc: Encloser::<T>::new(Tape::compile_one(&goal, n)?),
    };
    let out = run(&test, roots(&IntervalBox::cube(n, rho_pd)), cfg);
    let mut c = to_certificate(CertMode::LocalPd, &out);
    c.rho = rho_pd;
    c.alpha = beta;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn names() -> Vec<String> {
        vec!["x1".into(), "x2".into()]
    }

    fn task(goal: &str) -> VerifyTask {
        VerifyTask {
            goal: parse(goal, &names()).unwrap(),
            region: IntervalBox::cube(2, 1.0),
            excluded_ball_radius: 0.0,
            strict: false,
        }
    }

    #[test]
    fn simple_goals() {
        let cfg = BnbConfig::default();
        let c = bnb_prove::<f64>(&task("x1^2 + x2^2 - 5"), &cfg).unwrap();
        assert!(c.is_certified());
        assert_eq!(c.boxes_processed, 1);
        let c = bnb_prove::<f64>(&task("x1^2 - 0.5"), &cfg).unwrap();
        let Status::Refuted { witness_point, .. } = c.status else {
            panic!("{c:?}")
        };
        assert!(witness_point[0].abs() > 0.5f64.sqrt());
        let c = bnb_prove::<f64>(&task("-(x1 - x1)*1000000"), &cfg).unwrap();
        assert!(c.is_certified());
    }

    #[test]
    fn quadratic_bounds() {
        let cfg = BnbConfig::default();
        let w = parse("x1^2 + x2^2", &names()).unwrap();
        let c = verify_quadratic_bound::<f64>(&w, 2, 1.0, 0.1, &cfg).unwrap();
        assert!(c.is_certified());
        assert_eq!(c.boxes_processed, 1);
        assert!(verify_quadratic_bound::<f64>(&w, 2, 1.5, 0.1, &cfg)
            .unwrap()
            .status
            .is_refuted());
        let w = parse("x1^2 + x2^4", &names()).unwrap();
        let c = verify_quadratic_bound::<f64>(&w, 2, 0.9, 0.1, &cfg).unwrap();
        let Status::Refuted {
            witness_point: p,
            lower_bound,
            ..
        } = c.status
        else {
            panic!()
        };
        let g = 0.9 * (p[0] * p[0] + p[1] * p[1]) - p[0] * p[0] - p[1].powi(4);
        assert!(lower_bound > 0.0 && g >= lower_bound, "{p:?}");
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let t = task("x1*x2 - sin(x1)*x2^2 - 0.9");
        let one = bnb_prove::<f64>(
            &t,
            &BnbConfig {
                threads: Some(1),
                ..Default::default()
            },
        )
        .unwrap();
        let four = bnb_prove::<f64>(
            &t,
            &BnbConfig {
                threads: Some(4),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(one.status, four.status);
        assert_eq!(one.boxes_processed, four.boxes_processed);
        assert_eq!(one.max_depth, four.max_depth);
    }
}
