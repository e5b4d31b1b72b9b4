use nalgebra::DVector;
use proptest::prelude::*;

use viforge::metrics::{gap, natural_residual};
use viforge::problems::{conditioning, linspace_alpha, make_2d_bg, make_hbg, make_hbg_v2, ProblemError, ProblemSpec};

fn monotonicity(p: &ProblemSpec, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let op = p.operator();
    (op.apply(a) - op.apply(b)).dot(&(a - b))
}

proptest! {
    #[test]
    fn hbg_is_monotone(
        eta in 0.01..0.99f64,
        a in prop::collection::vec(-2.0..2.0f64, 12),
        b in prop::collection::vec(-2.0..2.0f64, 12),
    ) {
        let p = make_hbg(6, eta).unwrap();
        let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
        prop_assert!(monotonicity(&p, &a, &b) >= -1e-12 * (&a - &b).norm_squared().max(1.0));
    }

    #[test]
    fn hbg_v2_is_monotone(
        alpha in prop::collection::vec(0.5..10.0f64, 4),
        a in prop::collection::vec(-2.0..2.0f64, 8),
        b in prop::collection::vec(-2.0..2.0f64, 8),
    ) {
        let p = make_hbg_v2(&alpha).unwrap();
        let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
        prop_assert!(monotonicity(&p, &a, &b) >= -1e-12);
    }

    #[test]
    fn structured_operator_matches_dense(
        eta in 0.01..0.99f64,
        x in prop::collection::vec(-2.0..2.0f64, 14),
    ) {
        let p = make_hbg(7, eta).unwrap();
        let x = DVector::from_vec(x);
        let affine = p.operator().as_affine().unwrap();
        prop_assert!((p.operator().apply(&x) - (&affine.m * &x + &affine.q)).amax() < 1e-12);
    }

    #[test]
    fn initial_points_lie_on_the_simplex_blocks(seed in any::<u64>()) {
        let p = make_hbg(5, 0.3).unwrap();
        let x = p.initial_point(seed);
        prop_assert!((x.rows(0, 5).sum() - 1.0).abs() < 1e-12);
        prop_assert!((x.rows(5, 5).sum() - 1.0).abs() < 1e-12);
        prop_assert!(x.min() >= 0.0);
    }
}

#[test]
fn known_solutions_have_zero_gap_and_residual() {
    let problems = [
        make_2d_bg(),
        make_hbg(20, 0.05).unwrap(),
        make_hbg(500, 0.05).unwrap(),
        make_hbg_v2(&linspace_alpha(40, 10.0)).unwrap(),
    ];
    for p in &problems {
        let xs = p.known_solution().unwrap();
        assert!(gap(p, xs).unwrap().abs() < 1e-9, "{}", p.name());
        assert!(natural_residual(p, xs).unwrap() < 1e-9, "{}", p.name());
    }
}

#[test]
fn off_solution_points_have_positive_gap() {
    let p = make_2d_bg();
    assert!(gap(&p, &DVector::from_vec(vec![1.0, -0.2])).unwrap() > 0.1);
}

#[test]
fn out_of_range_parameters_are_rejected() {
    for eta in [0.0, 1.0, -0.5, f64::NAN] {
        assert!(matches!(make_hbg(10, eta), Err(ProblemError::ParamOutOfRange { name: "eta", .. })), "eta {eta}");
    }
    assert!(matches!(make_hbg(1, 0.5), Err(ProblemError::ParamOutOfRange { .. })));
    assert!(make_hbg_v2(&[1.0, -1.0]).is_err());
}

#[test]
fn conditioning_of_linear_alphas() {
    let alpha = linspace_alpha(5, 10.0);
    assert_eq!(alpha.first(), Some(&1.0));
    assert_eq!(alpha.last(), Some(&10.0));
    assert!((conditioning(&alpha) - 0.1).abs() < 1e-12);
}
