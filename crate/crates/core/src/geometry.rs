//! Affine equality geometry and the inequality-set projections shared by the
//! solvers, the projected baselines and the metrics.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative singular-value cutoff below which `C` is treated as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Stopping tolerance used when a halfspace set is projected without an
/// explicit tolerance.
pub const DEFAULT_GREEDY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("equality matrix is rank deficient: smallest singular value {smallest:e} vs largest {largest:e}")]
    RankDeficient { smallest: f64, largest: f64 },
    #[error("equality matrix has {rows} rows but only {cols} columns")]
    TooManyRows { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("box bounds must satisfy lo < hi componentwise (violated at index {index})")]
    InvalidBox { index: usize },
    #[error("halfspace row {row} has a zero normal")]
    ZeroNormal { row: usize },
    #[error("simplex blocks must be nonempty and disjoint (block {block})")]
    InvalidBlocks { block: usize },
    #[error("greedy projection did not reach tolerance within {steps} steps (max violation {violation:e})")]
    IterationBudgetExceeded { steps: usize, violation: f64 },
    #[error("no direct projection is available for {0} constraints")]
    Unsupported(&'static str),
}

/// Precomputed projector onto the affine set `{x : Cx = d}`.
///
/// `pc = I - Cᵀ(CCᵀ)⁻¹C` and `dc = Cᵀ(CCᵀ)⁻¹d`, so `pc * x + dc` is the
/// Euclidean projection of `x` onto the set. Both are computed once.
#[derive(Debug, Clone)]
pub struct EqualityGeometry {
    c: DMatrix<f64>,
    d: DVector<f64>,
    gram_inv: DMatrix<f64>,
    pc: DMatrix<f64>,
    dc: DVector<f64>,
}

impl EqualityGeometry {
    /// Geometry with no equality rows: `pc = I`, `dc = 0`.
    pub fn unconstrained(n: usize) -> Self {
        EqualityGeometry {
            c: DMatrix::zeros(0, n),
            d: DVector::zeros(0),
            gram_inv: DMatrix::zeros(0, 0),
            pc: DMatrix::identity(n, n),
            dc: DVector::zeros(n),
        }
    }

    pub fn new(c: DMatrix<f64>, d: DVector<f64>) -> Result<Self, GeometryError> {
        let (p, n) = c.shape();
        if d.len() != p {
            return Err(GeometryError::DimensionMismatch {
                expected: p,
                found: d.len(),
            });
        }
        if p == 0 {
            return Ok(Self::unconstrained(n));
        }
        if p > n {
            return Err(GeometryError::TooManyRows { rows: p, cols: n });
        }

        let sv = c.clone().svd(false, false).singular_values;
        let largest = sv.max();
        let smallest = sv.min();
        if !(largest > 0.0) || smallest <= RANK_TOLERANCE * largest {
            return Err(GeometryError::RankDeficient { smallest, largest });
        }

        let gram = &c * c.transpose();
        // Full row rank makes the Gram matrix SPD.
        let gram_inv = gram
            .cholesky()
            .map(|ch| ch.inverse())
            .ok_or(GeometryError::RankDeficient { smallest, largest })?;

        let ct_ginv = c.transpose() * &gram_inv;
        let pc = DMatrix::identity(n, n) - &ct_ginv * &c;
        let dc = &ct_ginv * &d;
        Ok(EqualityGeometry {
            c,
            d,
            gram_inv,
            pc,
            dc,
        })
    }

    pub fn dim(&self) -> usize {
        self.pc.nrows()
    }

    pub fn rows(&self) -> usize {
        self.c.nrows()
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn d(&self) -> &DVector<f64> {
        &self.d
    }

    pub fn pc(&self) -> &DMatrix<f64> {
        &self.pc
    }

    pub fn dc(&self) -> &DVector<f64> {
        &self.dc
    }

    /// `Pc v`, evaluated in factored form (`O(pn)` instead of `O(n²)`).
    pub fn apply_pc(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.c.nrows() == 0 {
            return v.clone();
        }
        let w = &self.gram_inv * (&self.c * v);
        v - self.c.tr_mul(&w)
    }

    /// `Pc M`, column by column in factored form.
    pub fn apply_pc_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        if self.c.nrows() == 0 {
            return m.clone();
        }
        let w = &self.gram_inv * (&self.c * m);
        m - self.c.tr_mul(&w)
    }

    /// Euclidean projection onto `{x : Cx = d}`.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        self.apply_pc(x) + &self.dc
    }

    /// Largest absolute component of `Cx - d`.
    pub fn residual(&self, x: &DVector<f64>) -> f64 {
        if self.c.nrows() == 0 {
            return 0.0;
        }
        (&self.c * x - &self.d).amax()
    }

    #[doc(hidden)]
    pub fn corrupt_projector_for_testing(&mut self, delta: f64) {
        if self.pc.nrows() > 0 {
            self.pc[(0, 0)] += delta;
        }
    }
}

/// Pc x + dc.
pub fn project_affine(geom: &EqualityGeometry, x: &DVector<f64>) -> DVector<f64> {
    geom.project(x)
}

pub fn project_box(lo: &DVector<f64>, hi: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        x.len(),
        x.iter()
            .zip(lo.iter().zip(hi.iter()))
            .map(|(&xi, (&l, &h))| xi.max(l).min(h)),
    )
}

/// Euclidean projection onto the probability simplex `{z ≥ 0, Σz = 1}`.
///
/// Sort-then-threshold: find the largest `ρ` with `u_ρ > (Σ_{i≤ρ} u_i - 1)/ρ`
/// on the descending sort `u`, then shift by that threshold and clip at zero.
pub fn project_simplex(x: &[f64]) -> Vec<f64> {
    let mut u: Vec<f64> = x.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    x.iter().map(|&xi| (xi - theta).max(0.0)).collect()
}

/// Greedy most-violated-halfspace projection onto `{θ : Aθ ≤ b}`.
///
/// Stops when no row is violated or the largest normalized violation drops
/// below `eps`. `max_steps` defaults to `10·m·n`.
pub fn project_greedy(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x: &DVector<f64>,
    eps: f64,
    max_steps: Option<usize>,
) -> Result<DVector<f64>, GeometryError> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(GeometryError::DimensionMismatch {
            expected: m,
            found: b.len(),
        });
    }
    if x.len() != n {
        return Err(GeometryError::DimensionMismatch {
            expected: n,
            found: x.len(),
        });
    }
    let norms_sq: Vec<f64> = (0..m).map(|j| a.row(j).norm_squared()).collect();
    if let Some(row) = norms_sq.iter().position(|&s| s == 0.0) {
        return Err(GeometryError::ZeroNormal { row });
    }
    let budget = max_steps.unwrap_or(10 * m.max(1) * n.max(1));
    let mut theta = x.clone();
    let mut steps = 0;
    loop {
        let ax = a * &theta;
        let mut worst: Option<(usize, f64, f64)> = None;
        for j in 0..m {
            let excess = ax[j] - b[j];
            if excess > 0.0 {
                let dist = excess / norms_sq[j].sqrt();
                // strict comparison keeps the lowest index on ties
                if worst.is_none_or(|(_, best, _)| dist > best) {
                    worst = Some((j, dist, excess));
                }
            }
        }
        let Some((i, dist, excess)) = worst else {
            return Ok(theta);
        };
        if dist < eps {
            return Ok(theta);
        }
        if steps >= budget {
            return Err(GeometryError::IterationBudgetExceeded {
                steps,
                violation: dist,
            });
        }
        let scale = excess / norms_sq[i];
        for (t, &aij) in theta.iter_mut().zip(a.row(i).iter()) {
            *t -= scale * aij;
        }
        steps += 1;
    }
}

/// Value and gradient of one smooth convex constraint `φ(x) ≤ 0`.
pub type ConstraintFn = dyn Fn(&DVector<f64>) -> (f64, DVector<f64>) + Send + Sync;

#[derive(Clone)]
pub struct SmoothConstraint(pub Arc<ConstraintFn>);

impl SmoothConstraint {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> (f64, DVector<f64>) + Send + Sync + 'static,
    {
        SmoothConstraint(Arc::new(f))
    }

    pub fn eval(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        (self.0)(x)
    }
}

impl fmt::Debug for SmoothConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SmoothConstraint(..)")
    }
}

/// Inequality constraint families `φ_i(x) ≤ 0`.
///
/// Box bounds may be infinite, in which case the corresponding side carries
/// no constraint (nonnegativity is `Box(0, +∞)`).
#[derive(Debug, Clone)]
pub enum InequalitySet {
    Unconstrained,
    Box { lo: DVector<f64>, hi: DVector<f64> },
    Simplex { blocks: Vec<Range<usize>> },
    Halfspaces { a: DMatrix<f64>, b: DVector<f64> },
    Smooth(Vec<SmoothConstraint>),
}

impl InequalitySet {
    pub fn boxed(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self, GeometryError> {
        if lo.len() != hi.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if let Some(index) = lo.iter().zip(hi.iter()).position(|(l, h)| !(l < h)) {
            return Err(GeometryError::InvalidBox { index });
        }
        Ok(InequalitySet::Box { lo, hi })
    }

    pub fn uniform_box(n: usize, lo: f64, hi: f64) -> Result<Self, GeometryError> {
        Self::boxed(DVector::from_element(n, lo), DVector::from_element(n, hi))
    }

    pub fn nonnegative(n: usize) -> Self {
        InequalitySet::Box {
            lo: DVector::zeros(n),
            hi: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn simplex(blocks: Vec<Range<usize>>) -> Result<Self, GeometryError> {
        let mut sorted: Vec<(usize, &Range<usize>)> = blocks.iter().enumerate().collect();
        sorted.sort_by_key(|(_, r)| r.start);
        let mut end = 0;
        for (idx, r) in sorted {
            if r.is_empty() || r.start < end {
                return Err(GeometryError::InvalidBlocks { block: idx });
            }
            end = r.end;
        }
        Ok(InequalitySet::Simplex { blocks })
    }

    pub fn halfspaces(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, GeometryError> {
        if a.nrows() != b.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: a.nrows(),
                found: b.len(),
            });
        }
        if let Some(row) = (0..a.nrows()).position(|j| a.row(j).norm_squared() == 0.0) {
            return Err(GeometryError::ZeroNormal { row });
        }
        Ok(InequalitySet::Halfspaces { a, b })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            InequalitySet::Unconstrained => "unconstrained",
            InequalitySet::Box { .. } => "box",
            InequalitySet::Simplex { .. } => "simplex",
            InequalitySet::Halfspaces { .. } => "halfspace",
            InequalitySet::Smooth(_) => "smooth",
        }
    }

    /// Direct projection `Π≤`. Halfspaces go through the greedy method.
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
        self.project_with_tolerance(x, DEFAULT_GREEDY_TOLERANCE)
    }

    pub fn project_with_tolerance(
        &self,
        x: &DVector<f64>,
        eps: f64,
    ) -> Result<DVector<f64>, GeometryError> {
        match self {
            InequalitySet::Unconstrained => Ok(x.clone()),
            InequalitySet::Box { lo, hi } => {
                check_len(lo.len(), x.len())?;
                Ok(project_box(lo, hi, x))
            }
            InequalitySet::Simplex { blocks } => {
                let mut out = x.clone();
                for r in blocks {
                    if r.end > x.len() {
                        return Err(GeometryError::DimensionMismatch {
                            expected: r.end,
                            found: x.len(),
                        });
                    }
                    let p = project_simplex(&x.as_slice()[r.clone()]);
                    out.as_mut_slice()[r.clone()].copy_from_slice(&p);
                }
                Ok(out)
            }
            InequalitySet::Halfspaces { a, b } => project_greedy(a, b, x, eps, None),
            InequalitySet::Smooth(_) => Err(GeometryError::Unsupported("smooth")),
        }
    }

    /// Largest constraint violation `max(0, φ_i(x))` (equality part of a
    /// simplex block included).
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        match self {
            InequalitySet::Unconstrained => 0.0,
            InequalitySet::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .map(|(&xi, (&l, &h))| (l - xi).max(xi - h).max(0.0))
                .fold(0.0, f64::max),
            InequalitySet::Simplex { blocks } => blocks
                .iter()
                .map(|r| {
                    let s = &x.as_slice()[r.clone()];
                    let neg = s.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
                    let sum_err = (s.iter().sum::<f64>() - 1.0).abs();
                    neg.max(sum_err)
                })
                .fold(0.0, f64::max),
            InequalitySet::Halfspaces { a, b } => {
                (a * x - b).iter().map(|v| v.max(0.0)).fold(0.0, f64::max)
            }
            InequalitySet::Smooth(cs) => cs.iter().map(|c| c.eval(x).0.max(0.0)).fold(0.0, f64::max),
        }
    }
}

fn check_len(expected: usize, found: usize) -> Result<(), GeometryError> {
    if expected == found {
        Ok(())
    } else {
        Err(GeometryError::DimensionMismatch { expected, found })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: &DVector<f64>, b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn single_row_projector_by_hand() {
        let g = EqualityGeometry::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_vec(vec![1.0]))
            .unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]);
        assert!((g.pc() - expected).norm() < 1e-15);
        assert!(close(g.dc(), &[0.5, 0.5], 1e-15));
        let p = project_affine(&g, &DVector::from_vec(vec![1.0, 1.0]));
        assert!(close(&p, &[0.5, 0.5], 1e-15));
        // least-squares cross-check: nearest point on x1 + x2 = 1 from (3, -2)
        let x = DVector::from_vec(vec![3.0, -2.0]);
        let shift = (x[0] + x[1] - 1.0) / 2.0;
        assert!(close(&g.project(&x), &[3.0 - shift, -2.0 - shift], 1e-14));
    }

    #[test]
    fn no_rows_is_identity() {
        let g = EqualityGeometry::new(DMatrix::zeros(0, 3), DVector::zeros(0)).unwrap();
        assert_eq!(g.pc(), &DMatrix::identity(3, 3));
        assert_eq!(g.dc(), &DVector::zeros(3));
        let x = DVector::from_vec(vec![1.0, -2.0, 7.5]);
        assert_eq!(project_affine(&g, &x), x);
    }

    #[test]
    fn fixed_point_on_the_affine_set() {
        let g = EqualityGeometry::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_vec(vec![1.0]))
            .unwrap();
        let x = DVector::from_vec(vec![0.3, 0.7]);
        assert!((g.project(&x) - &x).norm() < 1e-15);
    }

    #[test]
    fn block_sum_geometry_subtracts_block_means() {
        let k = 500;
        let mut c = DMatrix::zeros(2, 2 * k);
        for i in 0..k {
            c[(0, i)] = 1.0;
            c[(1, k + i)] = 1.0;
        }
        let g = EqualityGeometry::new(c, DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert!(g.dc().iter().all(|&v| (v - 1.0 / k as f64).abs() < 1e-15));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DVector::from_fn(2 * k, |_, _| rng.random_range(-1.0..1.0));
        let px = g.apply_pc(&x);
        let mean0: f64 = x.rows(0, k).sum() / k as f64;
        assert!((px[0] - (x[0] - mean0)).abs() < 1e-12);
        assert!(g.residual(&g.project(&x)) < 1e-10);
        let ppx = g.apply_pc(&px);
        assert!((ppx - &px).norm() < 1e-10);
        // factored application agrees with the dense projector
        assert!((g.pc() * &x - px).norm() < 1e-10);
    }

    #[test]
    fn rank_deficient_rows_are_rejected() {
        let c = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let err = EqualityGeometry::new(c, DVector::from_vec(vec![1.0, 2.0])).unwrap_err();
        assert!(matches!(err, GeometryError::RankDeficient { .. }));
    }

    #[test]
    fn corrupted_projector_loses_idempotence() {
        let mut g = EqualityGeometry::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_vec(vec![1.0]))
            .unwrap();
        g.corrupt_projector_for_testing(0.1);
        let pc = g.pc();
        assert!((pc * pc - pc).norm() > 1e-3);
    }

    #[test]
    fn box_clamp_cases() {
        let lo = DVector::from_element(2, -0.4);
        let hi = DVector::from_element(2, 2.4);
        let p = |v: [f64; 2]| project_box(&lo, &hi, &DVector::from_row_slice(&v));
        assert!(close(&p([3.0, 0.0]), &[2.4, 0.0], 0.0));
        assert!(close(&p([1.0, 0.5]), &[1.0, 0.5], 0.0));
        assert!(close(&p([-1.0, 3.0]), &[-0.4, 2.4], 0.0));
    }

    #[test]
    fn simplex_cases() {
        let u = project_simplex(&[0.2, 0.2, 0.2]);
        assert!(u.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let on = [0.1, 0.6, 0.3];
        let p = project_simplex(&on);
        assert!(p.iter().zip(on).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn greedy_single_constraint() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let b = DVector::from_vec(vec![1.0]);
        let p = project_greedy(&a, &b, &DVector::from_vec(vec![2.0, 0.0]), 1e-8, None).unwrap();
        assert!(close(&p, &[1.0, 0.0], 1e-15));
        let feasible = DVector::from_vec(vec![0.5, 3.0]);
        assert_eq!(project_greedy(&a, &b, &feasible, 1e-8, None).unwrap(), feasible);
    }

    #[test]
    fn greedy_budget_error_on_inconsistent_system() {
        // x ≤ -1 and -x ≤ -1 (x ≥ 1) is empty
        let a = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let b = DVector::from_vec(vec![-1.0, -1.0]);
        let err = project_greedy(&a, &b, &DVector::from_vec(vec![0.0]), 1e-8, Some(50)).unwrap_err();
        assert!(matches!(err, GeometryError::IterationBudgetExceeded { steps: 50, .. }));
    }

    #[test]
    fn greedy_ties_take_lowest_index() {
        // two constraints equally violated: x1 ≤ 0 and x2 ≤ 0 from (1, 1)
        let a = DMatrix::identity(2, 2);
        let b = DVector::zeros(2);
        let p = project_greedy(&a, &b, &DVector::from_vec(vec![1.0, 1.0]), 1e-12, Some(1));
        // one step allowed projects row 0 first, then the budget stops on row 1
        assert!(matches!(p, Err(GeometryError::IterationBudgetExceeded { steps: 1, .. })));
        let p = project_greedy(&a, &b, &DVector::from_vec(vec![1.0, 1.0]), 1e-12, Some(2)).unwrap();
        assert!(close(&p, &[0.0, 0.0], 0.0));
    }

    #[test]
    fn set_validation() {
        assert!(matches!(
            InequalitySet::uniform_box(2, 1.0, 1.0),
            Err(GeometryError::InvalidBox { index: 0 })
        ));
        assert!(InequalitySet::simplex(vec![0..3, 2..4]).is_err());
        assert!(InequalitySet::simplex(vec![3..5, 0..3]).is_ok());
        assert!(matches!(
            InequalitySet::halfspaces(DMatrix::zeros(1, 2), DVector::zeros(1)),
            Err(GeometryError::ZeroNormal { row: 0 })
        ));
    }

    #[test]
    fn nonnegative_box_projection_is_one_sided() {
        let s = InequalitySet::nonnegative(3);
        let p = s.project(&DVector::from_vec(vec![-1.0, 5.0, 0.0])).unwrap();
        assert!(close(&p, &[0.0, 5.0, 0.0], 0.0));
    }
}
