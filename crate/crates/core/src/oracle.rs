//! Slow reference implementations used to validate the fast paths.
//!
//! Nothing here shares code with `geometry` beyond the set description: the
//! projection oracle decomposes a set into boxes, halfspaces and hyperplanes
//! and runs Dykstra's alternating projections over the pieces.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::InequalitySet;

pub const DEFAULT_ORACLE_TOL: f64 = 1e-12;
pub const DEFAULT_ORACLE_SWEEPS: usize = 2_000_000;
pub const MAX_VERTEX_DIM: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("oracle did not converge after {sweeps} sweeps (last change {change:e})")]
    NoConvergence { sweeps: usize, change: f64 },
    #[error("vertex enumeration limited to n <= {max}, got {n}")]
    DimensionTooLarge { n: usize, max: usize },
    #[error("vertex enumeration needs finite bounds (index {index})")]
    UnboundedBox { index: usize },
    #[error("oracle cannot handle {0} constraints")]
    Unsupported(&'static str),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone)]
enum Piece {
    Box { lo: DVector<f64>, hi: DVector<f64> },
    /// `aᵀz ≤ b`
    Halfspace { a: DVector<f64>, b: f64 },
    /// `aᵀz = b`
    Hyperplane { a: DVector<f64>, b: f64 },
}

impl Piece {
    fn project(&self, z: &DVector<f64>) -> DVector<f64> {
        match self {
            Piece::Box { lo, hi } => DVector::from_fn(z.len(), |i, _| {
                let mut v = z[i];
                if v < lo[i] {
                    v = lo[i];
                }
                if v > hi[i] {
                    v = hi[i];
                }
                v
            }),
            Piece::Halfspace { a, b } => {
                let excess = a.dot(z) - b;
                if excess <= 0.0 {
                    z.clone()
                } else {
                    z - a * (excess / a.norm_squared())
                }
            }
            Piece::Hyperplane { a, b } => z - a * ((a.dot(z) - b) / a.norm_squared()),
        }
    }
}

/// A convex set `{z ∈ set : Cz = d}` decomposed for the oracle.
#[derive(Debug, Clone)]
pub struct OracleSet {
    n: usize,
    pieces: Vec<Piece>,
}

impl OracleSet {
    pub fn new(
        set: &InequalitySet,
        equality: Option<(&DMatrix<f64>, &DVector<f64>)>,
        n: usize,
    ) -> Result<Self, OracleError> {
        let mut pieces = Vec::new();
        match set {
            InequalitySet::Unconstrained => {}
            InequalitySet::Box { lo, hi } => {
                if lo.len() != n {
                    return Err(OracleError::DimensionMismatch {
                        expected: n,
                        found: lo.len(),
                    });
                }
                pieces.push(Piece::Box {
                    lo: lo.clone(),
                    hi: hi.clone(),
                });
            }
            InequalitySet::Simplex { blocks } => {
                let mut lo = DVector::from_element(n, f64::NEG_INFINITY);
                for r in blocks {
                    if r.end > n {
                        return Err(OracleError::DimensionMismatch {
                            expected: n,
                            found: r.end,
                        });
                    }
                    let mut a = DVector::zeros(n);
                    for i in r.clone() {
                        a[i] = 1.0;
                        lo[i] = 0.0;
                    }
                    pieces.push(Piece::Hyperplane { a, b: 1.0 });
                }
                pieces.push(Piece::Box {
                    lo,
                    hi: DVector::from_element(n, f64::INFINITY),
                });
            }
            InequalitySet::Halfspaces { a, b } => {
                for j in 0..a.nrows() {
                    pieces.push(Piece::Halfspace {
                        a: a.row(j).transpose(),
                        b: b[j],
                    });
                }
            }
            InequalitySet::Smooth(_) => return Err(OracleError::Unsupported("smooth")),
        }
        if let Some((c, d)) = equality {
            for j in 0..c.nrows() {
                pieces.push(Piece::Hyperplane {
                    a: c.row(j).transpose(),
                    b: d[j],
                });
            }
        }
        Ok(OracleSet { n, pieces })
    }

    /// Dykstra's method; stops once a full sweep moves neither the iterate
    /// nor any correction term by more than `tol`.
    pub fn project(&self, x: &DVector<f64>, tol: f64, max_sweeps: usize) -> Result<DVector<f64>, OracleError> {
        if x.len() != self.n {
            return Err(OracleError::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        if self.pieces.len() <= 1 {
            return Ok(self.pieces.first().map_or_else(|| x.clone(), |p| p.project(x)));
        }
        let mut z = x.clone();
        let mut corrections = vec![DVector::zeros(self.n); self.pieces.len()];
        let mut change = f64::INFINITY;
        for _ in 0..max_sweeps {
            change = 0.0;
            for (piece, corr) in self.pieces.iter().zip(corrections.iter_mut()) {
                let shifted = &z + &*corr;
                let next = piece.project(&shifted);
                let new_corr = &shifted - &next;
                change = change.max((&next - &z).amax()).max((&new_corr - &*corr).amax());
                *corr = new_corr;
                z = next;
            }
            if change <= tol {
                return Ok(z);
            }
        }
        Err(OracleError::NoConvergence {
            sweeps: max_sweeps,
            change,
        })
    }
}

pub fn oracle_project(
    set: &InequalitySet,
    equality: Option<(&DMatrix<f64>, &DVector<f64>)>,
    x: &DVector<f64>,
    tol: f64,
) -> Result<DVector<f64>, OracleError> {
    OracleSet::new(set, equality, x.len())?.project(x, tol, DEFAULT_ORACLE_SWEEPS)
}

/// Largest `⟨x − π, z − π⟩` over sample points `z`; nonpositive (up to
/// rounding) iff `π` is the projection of `x` onto a set containing them.
pub fn projection_kkt_violation(x: &DVector<f64>, pi: &DVector<f64>, samples: &[DVector<f64>]) -> f64 {
    let r = x - pi;
    samples
        .iter()
        .map(|z| r.dot(&(z - pi)))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `max_v ⟨f, x − v⟩` over all `2ⁿ` vertices of the box.
pub fn oracle_gap_vertices(
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    f: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<f64, OracleError> {
    let n = x.len();
    if n > MAX_VERTEX_DIM {
        return Err(OracleError::DimensionTooLarge {
            n,
            max: MAX_VERTEX_DIM,
        });
    }
    for len in [lo.len(), hi.len(), f.len()] {
        if len != n {
            return Err(OracleError::DimensionMismatch { expected: n, found: len });
        }
    }
    if let Some(index) = (0..n).find(|&i| !(lo[i].is_finite() && hi[i].is_finite())) {
        return Err(OracleError::UnboundedBox { index });
    }
    let fx = f.dot(x);
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1u32 << n) {
        let fv: f64 = (0..n)
            .map(|i| f[i] * if mask >> i & 1 == 1 { hi[i] } else { lo[i] })
            .sum();
        best = best.max(fx - fv);
    }
    Ok(best)
}

/// Central differences `(f(y + h eᵢ) − f(y − h eᵢ)) / 2h`.
pub fn finite_diff_grad<F>(f: F, y: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut probe = y.clone();
    DVector::from_fn(y.len(), |i, _| {
        probe[i] = y[i] + h;
        let up = f(&probe);
        probe[i] = y[i] - h;
        let down = f(&probe);
        probe[i] = y[i];
        (up - down) / (2.0 * h)
    })
}
