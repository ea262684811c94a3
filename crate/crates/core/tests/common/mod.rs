#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rescert::expr::UnaryFn;
use rescert::residual::{build_hjb_residual, build_lyap_residual, ResidualBundle};
use rescert::trainer::{make_collocation, train_hjb, train_lyapunov, CollocationKind, TrainConfig};
use rescert::{init_net, Expr, Mode, SystemModel, ValueNet64};

/// Random smooth expression in `n` variables, bounded in size.
pub fn random_smooth(rng: &mut ChaCha8Rng, n: usize, depth: u32) -> Expr {
    if depth == 0 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.7) {
            Expr::Var(rng.gen_range(0..n))
        } else {
            Expr::Const(rng.gen_range(-2.0..2.0))
        };
    }
    let sub = |rng: &mut ChaCha8Rng| random_smooth(rng, n, depth - 1);
    match rng.gen_range(0..9) {
        0 => Expr::Sum(vec![sub(rng), sub(rng)]),
        1 => Expr::Product(vec![sub(rng), sub(rng)]),
        2 => sub(rng).neg(),
        3 => sub(rng).pow(rng.gen_range(2..4)),
        4 => Expr::unary(UnaryFn::Sin, sub(rng)),
        5 => Expr::unary(UnaryFn::Cos, sub(rng)),
        6 => sub(rng).tanh(),
        // keep exp arguments tame
        7 => Expr::unary(UnaryFn::Exp, sub(rng).tanh()),
        _ => {
            let d = sub(rng);
            Expr::quotient(sub(rng), Expr::Sum(vec![Expr::Const(1.5), d.pow(2)]))
        }
    }
}

/// `g(x) − g(0) − Dg(0)·x`, which vanishes to first order at the origin.
pub fn flatten_at_origin(g: Expr, n: usize) -> Expr {
    let d = g.eval_dual2(&vec![0.0f64; n]).unwrap();
    let mut terms = vec![g, Expr::Const(-d.v)];
    for i in 0..n {
        terms.push(Expr::Var(i).scaled(-d.grad(i)));
    }
    Expr::Sum(terms)
}

pub fn uniform_in(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(a, b)| if a < b { rng.gen_range(*a..=*b) } else { *a })
        .collect()
}

pub struct Trained {
    pub net: ValueNet64,
    pub bundle: ResidualBundle,
}

/// Grid collocation, default trainer settings.
pub fn train(sys: &SystemModel, m: usize, seed: u64, scale: f64, count: usize) -> Trained {
    let net = init_net::<f64>(sys.n, m, seed, scale);
    let pts = make_collocation(&sys.domain, count, CollocationKind::Grid, 0).unwrap();
    let cfg = TrainConfig::default();
    let (net, _) = match sys.mode() {
        Mode::Lyapunov => train_lyapunov(sys, &net, &pts, &cfg).unwrap(),
        Mode::Hjb => train_hjb(sys, &net, &pts, &cfg).unwrap(),
    };
    let bundle = match sys.mode() {
        Mode::Lyapunov => build_lyap_residual(sys, &net).unwrap(),
        Mode::Hjb => build_hjb_residual(sys, &net).unwrap(),
    };
    Trained { net, bundle }
}
