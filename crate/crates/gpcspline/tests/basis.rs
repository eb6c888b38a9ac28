mod common;

use common::oracle_basis;
use gpcspline::basis::*;
use gpcspline::exact;
use num_traits::ToPrimitive;
use proptest::prelude::*;

fn kv(t: [f64; 5]) -> KnotVector5 {
    KnotVector5::new(t).unwrap()
}

/// Nondecreasing knots drawn from a small lattice, so repeats are common.
fn knots() -> impl Strategy<Value = [f64; 5]> {
    (prop::array::uniform5(0u8..7), 0.1f64..3.0, -3.0f64..3.0).prop_filter_map("zero support", |(raw, s, o)| {
        let mut t = raw.map(|v| v as f64 * s + o);
        t.sort_by(f64::total_cmp);
        (t[0] < t[4]).then_some(t)
    })
}

#[test]
fn uniform_cubic_values() {
    let b = kv([0.0, 1.0, 2.0, 3.0, 4.0]);
    assert!((cubic_basis(&b, 2.0) - 2.0 / 3.0).abs() < 1e-15);
    assert!((cubic_basis(&b, 1.0) - 1.0 / 6.0).abs() < 1e-15);
    assert_eq!(cubic_basis(&b, 4.0), 0.0);
    assert_eq!(cubic_basis(&b, -0.1), 0.0);
}

#[test]
fn clamped_end_takes_left_limit() {
    let b = kv([0.0, 1.0, 1.0, 1.0, 1.0]);
    assert_eq!(cubic_basis_side(&b, 1.0, Side::Right), 0.0);
    assert!((cubic_basis_side(&b, 1.0, Side::Left) - 1.0).abs() < 1e-15);
}

#[test]
fn rejects_bad_knots() {
    assert!(matches!(KnotVector5::new([0.0, 2.0, 1.0, 3.0, 4.0]), Err(BasisError::Unsorted(_))));
    assert!(matches!(KnotVector5::new([1.0; 5]), Err(BasisError::Degenerate(_))));
    assert!(matches!(basis_derivative(&kv([0.0, 1.0, 2.0, 3.0, 4.0]), 1.0, 3), Err(BasisError::Order(3))));
}

#[test]
fn bezier_and_bspline_evaluators_agree() {
    let ctrl: Vec<Point> = vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![3.0, 3.0], vec![4.0, 0.0]];
    let bez = BezierCurve::new(ctrl.clone()).unwrap();
    let bs = BSplineCurve::new(ctrl.clone(), vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0], 3).unwrap();
    for i in 0..=20 {
        let t = i as f64 / 20.0;
        let a = bernstein_eval(&bez, t).unwrap();
        let (b, _, _) = de_casteljau(&bez, t).unwrap();
        let c = deboor_eval(&bs, t).unwrap();
        let d = bs.eval_by_summation(t).unwrap();
        for k in 0..2 {
            assert!((a[k] - b[k]).abs() < 1e-13);
            assert!((a[k] - c[k]).abs() < 1e-13);
            assert!((a[k] - d[k]).abs() < 1e-13);
        }
    }
}

#[test]
fn nurbs_with_unit_weights_is_the_bspline() {
    let ctrl: Vec<Point> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
    let knots = vec![0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 3.0, 3.0, 3.0];
    let bs = BSplineCurve::new(ctrl, knots, 3).unwrap();
    let nurbs = NurbsCurve::new(bs.clone(), vec![1.0; 6]).unwrap();
    for i in 0..30 {
        let u = 3.0 * i as f64 / 30.0;
        let a = deboor_eval(&bs, u).unwrap();
        let b = nurbs_eval(&nurbs, u).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
    }
}

#[test]
fn de_casteljau_halves_reproduce_the_curve() {
    let bez = BezierCurve::new(vec![vec![0.0], vec![1.0], vec![-1.0], vec![2.0]]).unwrap();
    let (_, left, right) = de_casteljau(&bez, 0.3).unwrap();
    for i in 0..=10 {
        let s = i as f64 / 10.0;
        let on_left = bernstein_eval(&left, s).unwrap()[0];
        let on_right = bernstein_eval(&right, s).unwrap()[0];
        assert!((on_left - bernstein_eval(&bez, 0.3 * s).unwrap()[0]).abs() < 1e-13);
        assert!((on_right - bernstein_eval(&bez, 0.3 + 0.7 * s).unwrap()[0]).abs() < 1e-13);
    }
}

proptest! {
    #[test]
    fn matches_polynomial_oracle(t in knots(), f in -0.2f64..1.2) {
        let u = t[0] + f * (t[4] - t[0]);
        let b = kv(t);
        for side in [Side::Right, Side::Left] {
            let got = cubic_basis_side(&b, u, side);
            prop_assert!((got - oracle_basis(&t, u, side)).abs() <= 1e-12);
        }
    }

    #[test]
    fn nonnegative_with_local_support(t in knots(), f in -0.5f64..1.5) {
        let u = t[0] + f * (t[4] - t[0]);
        let v = cubic_basis(&kv(t), u);
        prop_assert!((0.0..=1.0 + 1e-15).contains(&v));
        if u < t[0] || u >= t[4] {
            prop_assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn clamped_family_sums_to_one(inner in prop::collection::vec(0.05f64..1.0, 1..6), f in 0.0f64..1.0) {
        let mut seq = vec![0.0; 4];
        let mut x = 0.0;
        for d in &inner {
            x += d;
            seq.push(x);
        }
        x += 0.5;
        seq.extend([x; 4]);
        let u = f * x * 0.999_999;
        let sum: f64 = seq.windows(5).map(|w| cubic_basis(&kv([w[0], w[1], w[2], w[3], w[4]]), u)).sum();
        prop_assert!((sum - 1.0).abs() <= 1e-13);
    }

    #[test]
    fn knot_insertion_identity(t in knots(), fk in 0.0f64..1.0, fu in 0.0f64..1.0) {
        let k = t[0] + fk * (t[4] - t[0]);
        let u = t[0] + fu * (t[4] - t[0]);
        let b = kv(t);
        let ((a, ca), (c, cc)) = refine_basis(&b, k).unwrap();
        let split = ca * cubic_basis(&a, u) + cc * cubic_basis(&c, u);
        prop_assert!((cubic_basis(&b, u) - split).abs() <= 1e-12);
    }

    #[test]
    fn exact_coefficients_round_to_float(t in knots(), fk in 0.0f64..1.0) {
        let k = t[0] + fk * (t[4] - t[0]);
        let (a, b) = split_coefficients(&t, k);
        let (x, y) = exact::split_coefficients(&t, k);
        prop_assert!((a - x.to_f64().unwrap()).abs() <= 1e-14);
        prop_assert!((b - y.to_f64().unwrap()).abs() <= 1e-14);
    }

    #[test]
    fn derivatives_match_central_differences(t in knots(), f in 0.0f64..1.0) {
        let u = t[0] + f * (t[4] - t[0]);
        let gap = t.windows(2).map(|w| w[1] - w[0]).filter(|g| *g > 0.0).fold(f64::INFINITY, f64::min);
        let h = 1e-4 * gap;
        prop_assume!(t.iter().all(|k| (k - u).abs() > 3.0 * h));
        let b = kv(t);
        let g = |x: f64| cubic_basis(&b, x);
        let d1 = (g(u + h) - g(u - h)) / (2.0 * h);
        let d2 = (g(u + h) - 2.0 * g(u) + g(u - h)) / (h * h);
        let a1 = basis_derivative(&b, u, 1).unwrap();
        let a2 = basis_derivative(&b, u, 2).unwrap();
        prop_assert!((a1 - d1).abs() <= 1e-6 * a1.abs().max(1.0));
        prop_assert!((a2 - d2).abs() <= 1e-5 * a2.abs().max(1.0));
    }
}
