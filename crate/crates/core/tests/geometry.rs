#![allow(clippy::single_range_in_vec_init)]

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use viforge::geometry::{project_box, project_greedy, project_simplex, EqualityGeometry, GeometryError, InequalitySet};
use viforge::oracle::oracle_project;
use viforge::verify::projector_defect;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0..1.0f64, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn vector(n: usize, scale: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-scale..scale, n).prop_map(DVector::from_vec)
}

fn geometry_case() -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>, DVector<f64>)> {
    (2usize..8)
        .prop_flat_map(|n| (1..n).prop_map(move |p| (p, n)))
        .prop_flat_map(|(p, n)| (matrix(p, n), vector(p, 2.0), vector(n, 5.0)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn projector_is_symmetric_idempotent_and_annihilates_rows((c, d, x) in geometry_case()) {
        let geom = EqualityGeometry::new(c, d).unwrap();
        prop_assert!(projector_defect(&geom, &x) < 1e-8);
    }

    #[test]
    fn factored_projector_matches_dense((c, d, x) in geometry_case()) {
        let geom = EqualityGeometry::new(c, d).unwrap();
        prop_assert!((geom.apply_pc(&x) - geom.pc() * &x).amax() < 1e-10);
        let m = DMatrix::from_fn(x.len(), 3, |i, j| x[i] * (j as f64 + 1.0));
        prop_assert!((geom.apply_pc_matrix(&m) - geom.pc() * &m).amax() < 1e-10);
    }

    #[test]
    fn simplex_projection_is_feasible_and_nonexpansive(a in vector(6, 4.0), b in vector(6, 4.0)) {
        let pa = DVector::from_vec(project_simplex(a.as_slice()));
        let pb = DVector::from_vec(project_simplex(b.as_slice()));
        prop_assert!((pa.sum() - 1.0).abs() < 1e-12);
        prop_assert!(pa.min() >= 0.0);
        prop_assert!((&pa - &pb).norm() <= (&a - &b).norm() + 1e-12);
    }

    #[test]
    fn simplex_projection_matches_oracle(x in (2usize..=10).prop_flat_map(|n| vector(n, 3.0))) {
        let set = InequalitySet::simplex(vec![0..x.len()]).unwrap();
        let fast = DVector::from_vec(project_simplex(x.as_slice()));
        let slow = oracle_project(&set, None, &x, 1e-12).unwrap();
        prop_assert!((fast - slow).amax() < 1e-6);
    }

    #[test]
    fn box_projection_is_idempotent(x in vector(5, 5.0), width in 0.1..3.0f64) {
        let lo = DVector::from_element(5, -width);
        let hi = DVector::from_element(5, width);
        let once = project_box(&lo, &hi, &x);
        prop_assert_eq!(project_box(&lo, &hi, &once), once);
    }

    #[test]
    fn greedy_projection_ends_feasible(a in matrix(4, 3), b in prop::collection::vec(0.1..1.0f64, 4), x in vector(3, 5.0)) {
        let b = DVector::from_vec(b);
        let y = project_greedy(&a, &b, &x, 1e-9, Some(1_000_000)).unwrap();
        for i in 0..4 {
            let row = a.row(i);
            let v = (row * &y)[0] - b[i];
            prop_assert!(v <= 1e-9 * row.norm().max(1.0), "row {} violated by {}", i, v);
        }
    }
}

#[test]
fn rank_deficient_rows_are_rejected() {
    let c = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
    let err = EqualityGeometry::new(c, DVector::zeros(2)).unwrap_err();
    assert!(matches!(err, GeometryError::RankDeficient { .. }), "{err:?}");
}

#[test]
fn box_with_infinite_bound_clips_one_side() {
    let set = InequalitySet::boxed(DVector::from_vec(vec![0.0, f64::NEG_INFINITY]), DVector::from_vec(vec![1.0, 2.0])).unwrap();
    let x = DVector::from_vec(vec![1.5, -7.0]);
    assert_eq!(set.project(&x).unwrap(), DVector::from_vec(vec![1.0, -7.0]));
}

#[test]
fn box_intersected_with_hyperplane() {
    let set = InequalitySet::uniform_box(2, 0.0, 1.0).unwrap();
    let c = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
    let d = DVector::from_element(1, 1.0);
    let p = oracle_project(&set, Some((&c, &d)), &DVector::from_vec(vec![2.0, 2.0]), 1e-12).unwrap();
    assert!((p - DVector::from_vec(vec![0.5, 0.5])).amax() < 1e-9);
}
