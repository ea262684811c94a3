mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rescert::{parse, Box64, Expr, Interval64, IntervalBox, Tape};

use common::{random_smooth, uniform_in};

fn vars2() -> Vec<String> {
    vec!["x1".into(), "x2".into()]
}

fn p(s: &str) -> Expr {
    parse(s, &vars2()).unwrap()
}

#[test]
fn parser_examples() {
    assert_eq!(p("sin(x1) - x2").eval(&[0.0f64, 0.0]).unwrap(), 0.0);
    assert_eq!(p("x1^2 + x2^2").eval(&[1.0f64, 1.0]).unwrap(), 2.0);
    let e = p("sin(x1)-x2-(4.4142*x1+2.3163*x2)");
    assert_eq!(e.eval(&[0.0f64, 0.0]).unwrap(), 0.0);
    assert_eq!(p("x1*x2").eval(&[3.0f64, 4.0]).unwrap(), 12.0);
    assert_eq!(p("tanh(0)").eval(&[0.0f64, 0.0]).unwrap(), 0.0);
    assert_eq!(p("x1^2+x2^2").eval(&[0.5f64, 0.5]).unwrap(), 0.5);
}

#[test]
fn parser_errors() {
    assert!(parse("x1 +", &vars2()).is_err());
    assert!(parse("y + 1", &vars2()).is_err());
    assert!(parse("x1^0.5", &vars2()).is_err());
    assert!(parse("log(x1)", &vars2()).is_err());
}

#[test]
fn domain_errors_at_evaluation() {
    assert!(p("1/x1").eval(&[0.0f64, 1.0]).is_err());
    assert!(p("sqrt(x1)").eval(&[-1.0f64, 1.0]).is_err());
    let b = IntervalBox::from_bounds(&[-1.0, 0.0], &[1.0, 1.0]).unwrap();
    assert!(p("1/x1").eval_interval(&b).is_err());
}

#[test]
fn dual2_examples() {
    let x = vec!["x1".to_string()];
    let d = parse("x1^2", &x).unwrap().eval_dual2(&[2.0f64]).unwrap();
    assert_eq!((d.v, d.grad(0), d.hess(0, 0)), (4.0, 4.0, 2.0));
    let d = parse("sin(x1)", &x).unwrap().eval_dual2(&[0.0f64]).unwrap();
    assert_eq!((d.v, d.grad(0), d.hess(0, 0)), (0.0, 1.0, 0.0));
}

#[test]
fn cubic_polynomial_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let monomials = [
        (0, 0),
        (1, 0),
        (0, 1),
        (2, 0),
        (1, 1),
        (0, 2),
        (3, 0),
        (2, 1),
        (1, 2),
        (0, 3),
    ];
    let terms: Vec<Expr> = monomials
        .iter()
        .map(|&(a, b)| {
            Expr::product(vec![
                Expr::Const(rng.gen_range(-2.0..2.0)),
                Expr::Var(0).pow(a),
                Expr::Var(1).pow(b),
            ])
        })
        .collect();
    let e = Expr::sum(terms);
    let h = 1e-5;
    for _ in 0..10 {
        let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let d = e.eval_dual2(&x).unwrap();
        for i in 0..2 {
            let shift = |x: [f64; 2], i: usize, s: f64| {
                let mut y = x;
                y[i] += s;
                y
            };
            let f = |y: [f64; 2]| e.eval(&y).unwrap();
            let g = (f(shift(x, i, h)) - f(shift(x, i, -h))) / (2.0 * h);
            assert!(
                (g - d.grad(i)).abs() <= 1e-6 * (1.0 + g.abs()),
                "grad {i}: {g} vs {}",
                d.grad(i)
            );
            for j in 0..2 {
                let gp = |y: [f64; 2]| e.eval_dual2(&y).unwrap().grad(i);
                let hij = (gp(shift(x, j, h)) - gp(shift(x, j, -h))) / (2.0 * h);
                assert!((hij - d.hess(i, j)).abs() <= 1e-6 * (1.0 + hij.abs()));
            }
        }
    }
}

#[test]
fn interval_examples() {
    let x = vec!["x1".to_string()];
    let sq = parse("x1^2", &x).unwrap().eval_interval(&Box64::cube(1, 1.0)).unwrap();
    // even power, not x·x
    assert!(sq.lo() >= 0.0 && sq.lo() <= 0.0 && sq.hi() >= 1.0 && sq.hi() < 1.0 + 1e-12);
    let b = IntervalBox::from_bounds(&[0.0], &[1.0]).unwrap();
    let d = parse("x1 - x1", &x).unwrap().eval_interval(&b).unwrap();
    assert!(d.contains(0.0) && d.lo() >= -1.0 - 1e-15 && d.hi() <= 1.0 + 1e-15);

    let e = p("x1^2+x2^2").eval_interval_dual2(&Box64::cube(2, 1.0)).unwrap();
    assert!(e.hess(0, 0).contains(2.0) && e.hess(0, 1).contains(0.0));
    let b = IntervalBox::from_bounds(&[0.0], &[std::f64::consts::FRAC_PI_2]).unwrap();
    let e = parse("sin(x1)", &x).unwrap().eval_interval_dual2(&b).unwrap();
    assert!(e.hess(0, 0).contains(-1.0) && e.hess(0, 0).contains(0.0));
}

#[test]
fn sampled_enclosure_fuzz() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let n = rng.gen_range(1..=3);
        let e = random_smooth(&mut rng, n, 4);
        let lo: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + rng.gen_range(0.0..1.0)).collect();
        let b = IntervalBox::from_bounds(&lo, &hi).unwrap();
        let enc = e.eval_interval(&b).unwrap();
        for _ in 0..10 {
            let v = e.eval(&uniform_in(&mut rng, &lo, &hi)).unwrap();
            assert!(enc.lo() <= v + 1e-12 * v.abs() && v - 1e-12 * v.abs() <= enc.hi());
        }
    }
}

fn expr_and_box() -> impl Strategy<Value = (Expr, Vec<f64>, Vec<f64>, u64)> {
    (any::<u64>(), 1usize..=3).prop_map(|(seed, n)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_smooth(&mut rng, n, 4);
        let lo: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + rng.gen_range(0.0..1.5)).collect();
        (e, lo, hi, seed)
    })
}

fn within(v: f64, i: &Interval64) -> bool {
    let s = 1e-10 * (1.0 + v.abs());
    i.lo() - s <= v && v <= i.hi() + s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn point_derivatives_lie_in_box_enclosures((e, lo, hi, seed) in expr_and_box()) {
        let n = lo.len();
        let b = IntervalBox::from_bounds(&lo, &hi).unwrap();
        let tape = Tape::compile_one(&e, n).unwrap();
        let enc = tape.eval_interval_dual2(&b).unwrap().remove(0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for _ in 0..20 {
            let x = uniform_in(&mut rng, &lo, &hi);
            let d = tape.eval_dual2(&x).unwrap().remove(0);
            prop_assert!(within(d.v, &enc.v));
            for i in 0..n {
                prop_assert!(within(d.grad(i), &enc.grad(i)));
                for j in 0..n {
                    prop_assert!(within(d.hess(i, j), &enc.hess(i, j)));
                }
            }
        }
    }

    #[test]
    fn splitting_never_widens((e, lo, hi, _seed) in expr_and_box(), dim in 0usize..3) {
        let b = IntervalBox::from_bounds(&lo, &hi).unwrap();
        let dim = dim % b.dim();
        let parent = e.eval_interval(&b).unwrap();
        let (l, r) = b.bisect(dim);
        let hull = e.eval_interval(&l).unwrap().hull(&e.eval_interval(&r).unwrap());
        prop_assert!(hull.subset_of(&parent), "{hull:?} vs {parent:?}");
    }

    #[test]
    fn display_round_trips((e, lo, _hi, _seed) in expr_and_box()) {
        let names: Vec<String> = (0..lo.len()).map(|i| format!("x{}", i + 1)).collect();
        let text = e.display(&names).to_string();
        let back = parse(&text, &names).unwrap();
        prop_assert_eq!(&back, &e, "{}", text);
    }

    #[test]
    fn derivatives_match_finite_differences((e, lo, hi, seed) in expr_and_box()) {
        let n = lo.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let x = uniform_in(&mut rng, &lo, &hi);
        let d = e.eval_dual2(&x).unwrap();
        let central = |i: usize, h: f64| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            (e.eval(&xp).unwrap() - e.eval(&xm).unwrap()) / (2.0 * h)
        };
        for i in 0..n {
            // Richardson extrapolation, O(h⁴); the gap to the O(h²) estimate
            // bounds the oracle's own truncation error
            let (coarse, fine) = (central(i, 2e-4), central(i, 1e-4));
            let fd = (4.0 * fine - coarse) / 3.0;
            let oracle_err = (fd - fine).abs();
            let tol = 1e-6 * (1.0 + fd.abs().max(d.grad(i).abs())) + oracle_err;
            prop_assert!((fd - d.grad(i)).abs() <= tol, "{fd} vs {} (oracle error {oracle_err:e})", d.grad(i));
        }
    }
}
