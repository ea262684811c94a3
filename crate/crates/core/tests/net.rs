use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rescert::net::NetFileError;
use rescert::residual::{build_hjb_residual, build_lyap_residual};
use rescert::system::bundled;
use rescert::{init_net, Box64, IntervalBox, ValueNet64};

fn random_net(n: usize, m: usize, seed: u64) -> ValueNet64 {
    let mut net = init_net::<f64>(n, m, seed, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    net.w.iter_mut().for_each(|w| *w = rng.gen_range(-1.0..1.0));
    net.corrected()
}

#[test]
fn seeded_initialization() {
    let a = init_net::<f64>(2, 400, 42, 1.0);
    assert_eq!(a, init_net::<f64>(2, 400, 42, 1.0));
    assert_ne!(a.a, init_net::<f64>(2, 400, 43, 1.0).a);
    assert!(a.a.iter().chain(&a.b).all(|v| v.abs() <= 1.0));
    assert!(a.w.iter().all(|&w| w == 0.0) && a.c0 == 0.0 && a.c1 == vec![0.0; 2]);
}

#[test]
fn zero_output_weights() {
    let net = init_net::<f64>(2, 30, 5, 1.0).corrected();
    assert_eq!((net.c0, net.c1.clone()), (0.0, vec![0.0, 0.0]));
    assert_eq!(net.value(&[0.3, -0.7]), 0.0);
    let sys = bundled("pendulum_lyap").unwrap();
    let r = build_lyap_residual(&sys, &net).unwrap().r;
    for x in [[0.3f64, 0.4], [-1.0, 0.5], [0.9, -0.1]] {
        let w = x[0] * x[0] + x[1] * x[1];
        assert!((r.eval(&x).unwrap() - w).abs() <= 1e-15);
    }
}

#[test]
fn single_unit_by_hand() {
    let mut net = init_net::<f64>(2, 1, 0, 1.0);
    net.a = vec![1.0, 0.0];
    net.b = vec![0.0];
    net.w = vec![1.0];
    let net = net.corrected();
    assert_eq!((net.c0, net.c1.clone()), (0.0, vec![1.0, 0.0]));
    for x in [0.3f64, -0.8] {
        assert!((net.value(&[x, 0.2]) - (x.tanh() - x)).abs() < 1e-15);
    }
    let d = net.eval2(&[0.0, 0.0]);
    assert_eq!((d.grad(0), d.grad(1)), (0.0, 0.0));
    assert_eq!(net.to_expr().eval(&[0.5f64, 0.1]).unwrap(), 0.5f64.tanh() - 0.5);
}

#[test]
fn refresh_is_idempotent() {
    let net = random_net(2, 50, 1);
    assert_eq!(net.clone().corrected(), net);
    let d = net.eval2(&[0.0, 0.0]);
    assert!(d.v.abs() <= 1e-12 && d.grad(0).abs() <= 1e-12 && d.grad(1).abs() <= 1e-12);
}

#[test]
fn closed_form_derivatives_match_finite_differences() {
    let net = random_net(2, 40, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let h = 1e-5;
    for _ in 0..10 {
        let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let d = net.eval2(&x);
        for i in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let g = (net.value(&xp) - net.value(&xm)) / (2.0 * h);
            assert!((g - d.grad(i)).abs() <= 1e-6 * (1.0 + g.abs()));
            for j in 0..2 {
                let hij = (net.eval2(&xp).grad(j) - net.eval2(&xm).grad(j)) / (2.0 * h);
                assert!((hij - d.hess(i, j)).abs() <= 1e-6 * (1.0 + hij.abs()));
            }
        }
        assert_eq!(d.hess(0, 1), d.hess(1, 0));
    }
}

#[test]
fn expression_forms_agree_with_closed_form() {
    let net = random_net(2, 1000, 3);
    let (raw, centered) = (net.to_expr(), net.centered_expr());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let v = net.value(&x);
        let tol = 1e-10 * v.abs().max(1.0);
        assert!((raw.eval(&x).unwrap() - v).abs() <= tol);
        assert!((centered.eval(&x).unwrap() - v).abs() <= tol);
    }
}

#[test]
fn closed_form_values_lie_in_enclosures() {
    let net = random_net(2, 60, 5);
    let e = net.centered_expr();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let lo = [rng.gen_range(-1.0..0.8), rng.gen_range(-1.0..0.8)];
        let hi = [lo[0] + rng.gen_range(0.0..0.2), lo[1] + rng.gen_range(0.0..0.2)];
        let enc = e
            .eval_interval_dual2(&IntervalBox::from_bounds(&lo, &hi).unwrap())
            .unwrap();
        for _ in 0..10 {
            let x = [rng.gen_range(lo[0]..=hi[0]), rng.gen_range(lo[1]..=hi[1])];
            let d = net.eval2(&x);
            let slack = 1e-12;
            assert!(enc.v.lo() - slack <= d.v && d.v <= enc.v.hi() + slack);
            for i in 0..2 {
                assert!(enc.grad(i).lo() - slack <= d.grad(i) && d.grad(i) <= enc.grad(i).hi() + slack);
            }
        }
    }
    assert!(e.eval_interval(&Box64::cube(2, 1.0)).is_ok());
}

#[test]
fn file_round_trip_is_bit_exact() {
    let net = random_net(2, 400, 7);
    let back = ValueNet64::from_text(&net.to_text()).unwrap();
    assert_eq!(back, net);
    let path = std::env::temp_dir().join("rescert-net-test.net");
    net.save(&path).unwrap();
    assert_eq!(ValueNet64::load(&path).unwrap(), net);
}

#[test]
fn malformed_files() {
    let text = random_net(2, 10, 8).to_text();
    let cut: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
    assert!(matches!(
        ValueNet64::from_text(&cut),
        Err(NetFileError::Truncated { .. })
    ));
    let old = text.replacen("rescert-net 1", "rescert-net 7", 1);
    assert!(matches!(
        ValueNet64::from_text(&old),
        Err(NetFileError::Version { found: 7 })
    ));
    assert!(ValueNet64::from_text("hello").is_err());
    assert!(ValueNet64::load("/nonexistent/net").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corrected_residuals_vanish_to_first_order(seed in any::<u64>(), m in 1usize..80) {
        let net = random_net(2, m, seed);
        let zero = [0.0f64, 0.0];
        for name in ["pendulum_lyap", "pendulum_hjb"] {
            let sys = bundled(name).unwrap();
            let r = if name == "pendulum_lyap" {
                build_lyap_residual(&sys, &net).unwrap().r
            } else {
                build_hjb_residual(&sys, &net).unwrap().r
            };
            let d = r.eval_dual2(&zero).unwrap();
            prop_assert!(d.v.abs() <= 1e-10 && d.grad(0).abs() <= 1e-10 && d.grad(1).abs() <= 1e-10);
        }
    }

    #[test]
    fn hessian_is_symmetric(seed in any::<u64>(), x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let d = random_net(2, 20, seed).eval2(&[x, y]);
        prop_assert_eq!(d.hess(0, 1), d.hess(1, 0));
    }
}
