mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rescert::oracle::{lyap_solve, riccati_solve, uniform_grid};
use rescert::system::bundled;
use rescert::trainer::*;
use rescert::{init_net, Box64, IntervalBox};

fn quad(p: &DMatrix<f64>, x: &[f64]) -> f64 {
    let v = nalgebra::DVector::from_column_slice(x);
    (v.transpose() * p * &v)[(0, 0)]
}

fn max_relative_error(net: &rescert::ValueNet64, p: &DMatrix<f64>, domain: &Box64) -> f64 {
    uniform_grid(domain, 21)
        .iter()
        .filter(|x| x.iter().any(|&c| c != 0.0))
        .map(|x| (net.value(x) - quad(p, x)).abs() / quad(p, x))
        .fold(0.0, f64::max)
}

#[test]
fn collocation_sets() {
    let d = Box64::cube(2, 1.0);
    let g = make_collocation(&d, 9, CollocationKind::Grid, 0).unwrap();
    let mut expected = Vec::new();
    for x2 in [-1.0, 0.0, 1.0] {
        for x1 in [-1.0, 0.0, 1.0] {
            expected.push(vec![x1, x2]);
        }
    }
    assert_eq!(g.points, expected);
    assert!(make_collocation(&d, 0, CollocationKind::Grid, 0).is_err());
}

#[test]
fn scalar_value_is_recovered() {
    let sys = bundled("scalar_exp").unwrap();
    let tr = common::train(&sys, 50, 7, 1.0, 2000);
    let worst = uniform_grid(&sys.domain, 101)
        .iter()
        .map(|x| (tr.net.value(x) - 0.5 * x[0] * x[0]).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-4, "{worst:e}");
}

#[test]
fn linear_value_matches_lyapunov_matrix() {
    let sys = bundled("linear2d_lyap").unwrap();
    let tr = common::train(&sys, 100, 7, 1.0, 4000);
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
    let p = lyap_solve(&a, &DMatrix::identity(2, 2)).unwrap();
    let err = max_relative_error(&tr.net, &p, &sys.domain);
    assert!(err <= 1e-3, "{err:e}");
}

#[test]
fn lyapunov_training_is_reproducible_and_beats_zero() {
    let sys = bundled("pendulum_lyap").unwrap();
    let net = init_net::<f64>(2, 400, 7, 1.0);
    let pts = make_collocation(&sys.domain, 10_000, CollocationKind::Grid, 0).unwrap();
    let cfg = TrainConfig::default();
    let (a, rep) = train_lyapunov(&sys, &net, &pts, &cfg).unwrap();
    let (b, _) = train_lyapunov(&sys, &net, &pts, &cfg).unwrap();
    assert_eq!(a, b);
    let st = rep.iterations.last().unwrap();
    assert!(st.max_relative < 1e-3, "{:e}", st.max_relative);
    assert!(st.rms_residual <= st.max_residual);
    // w = 0 has residual ω
    let tape = sys.tape().unwrap();
    let rms0 = (pts
        .points
        .iter()
        .map(|x| tape.eval(x).unwrap().weight.powi(2))
        .sum::<f64>()
        / pts.points.len() as f64)
        .sqrt();
    assert!(st.rms_residual <= rms0);
}

#[test]
fn lqr_value_matches_riccati() {
    let sys = bundled("lqr_di").unwrap();
    let net = init_net::<f64>(2, 100, 7, 2.0);
    let pts = make_collocation(&sys.domain, 2500, CollocationKind::Grid, 0).unwrap();
    let cfg = TrainConfig::default();
    let (trained, rep) = train_hjb(&sys, &net, &pts, &cfg).unwrap();
    assert!(rep.converged);
    let (a, b) = sys.linearize().unwrap();
    let p = riccati_solve(&a, &b, &DMatrix::identity(2, 2), &DMatrix::identity(1, 1)).unwrap();
    let err = max_relative_error(&trained, &p, &sys.domain);
    assert!(err <= 1e-3, "{err:e}");

    // one more iteration past convergence barely moves the residual
    let k = rep.iterations.len();
    let extra = TrainConfig {
        max_iters: k + 1,
        tol: 0.0,
        ..cfg.clone()
    };
    let (_, rep2) = train_hjb(&sys, &net, &pts, &extra).unwrap();
    let (r1, r2) = (rep.iterations[k - 1].rms_residual, rep2.iterations[k].rms_residual);
    assert!((r1 - r2).abs() <= 10.0 * cfg.tol, "{r1:e} vs {r2:e}");
}

#[test]
fn pendulum_policy_iteration_converges() {
    let sys = bundled("pendulum_hjb").unwrap();
    let net = init_net::<f64>(2, 400, 7, 0.5);
    let pts = make_collocation(&sys.domain, 10_000, CollocationKind::Grid, 0).unwrap();
    let (_, rep) = train_hjb(&sys, &net, &pts, &TrainConfig::default()).unwrap();
    assert!(rep.converged);
    let st = rep.iterations.last().unwrap();
    assert!(st.max_relative <= 1e-2, "{:e}", st.max_relative);
    assert!(rep.iterations.iter().all(|s| s.rms_residual <= s.max_residual));
}

#[test]
fn mode_mismatch_is_an_error() {
    let sys = bundled("pendulum_hjb").unwrap();
    let net = init_net::<f64>(2, 10, 1, 1.0);
    let pts = make_collocation(&sys.domain, 16, CollocationKind::Grid, 0).unwrap();
    assert!(matches!(
        train_lyapunov(&sys, &net, &pts, &TrainConfig::default()),
        Err(TrainError::Mode { .. })
    ));
    let sys = bundled("scalar_exp").unwrap();
    assert!(matches!(
        train_lyapunov(&sys, &net, &pts, &TrainConfig::default()),
        Err(TrainError::Dimension { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn collocation_points_stay_inside(
        lo in prop::collection::vec(-3.0f64..-0.01, 1..4),
        span in 0.02f64..4.0,
        count in 1usize..500,
        seed in any::<u64>(),
        halton in any::<bool>(),
    ) {
        let hi: Vec<f64> = lo.iter().map(|l| l + span).collect();
        let d = IntervalBox::from_bounds(&lo, &hi).unwrap();
        let kind = if halton { CollocationKind::Halton } else { CollocationKind::Grid };
        let seed = seed % 1_000_000;
        let set = make_collocation(&d, count, kind, seed).unwrap();
        prop_assert!(!set.points.is_empty() && set.points.len() <= count);
        prop_assert!(set.points.iter().all(|p| d.contains(p)));
        prop_assert_eq!(set, make_collocation(&d, count, kind, seed).unwrap());
    }
}
