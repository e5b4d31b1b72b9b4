//! Convergence measures evaluated on the `x` iterate.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, InequalitySet};
use crate::problems::ProblemSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("gap is unbounded over a non-compact {0} set")]
    NonCompactSet(&'static str),
    #[error("problem has no joint feasible set to project onto")]
    NoFeasibleSet,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One row of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub k: usize,
    pub mu: f64,
    pub gap: Option<f64>,
    pub rel_err: Option<f64>,
    pub feas: f64,
    pub nat_res: Option<f64>,
    pub sigma: f64,
    pub eps_surr: f64,
    pub lyapunov: f64,
    pub elapsed_ms: f64,
}

/// `min_{x ∈ S} ⟨f, x⟩` for a compact set with a closed-form linear oracle.
fn linear_minimum(set: &InequalitySet, f: &DVector<f64>) -> Result<f64, MetricsError> {
    match set {
        InequalitySet::Box { lo, hi } => {
            let mut total = 0.0;
            for i in 0..f.len() {
                let v = if f[i] > 0.0 {
                    lo[i]
                } else if f[i] < 0.0 {
                    hi[i]
                } else {
                    continue;
                };
                if !v.is_finite() {
                    return Err(MetricsError::NonCompactSet("box"));
                }
                total += f[i] * v;
            }
            Ok(total)
        }
        InequalitySet::Simplex { blocks } => {
            let mut covered = vec![false; f.len()];
            let mut total = 0.0;
            for r in blocks {
                if r.end > f.len() {
                    return Err(MetricsError::DimensionMismatch {
                        expected: r.end,
                        found: f.len(),
                    });
                }
                total += f.as_slice()[r.clone()].iter().copied().fold(f64::INFINITY, f64::min);
                covered[r.clone()].iter_mut().for_each(|c| *c = true);
            }
            // coordinates outside every block are free
            if covered.iter().zip(f.iter()).any(|(&c, &v)| !c && v != 0.0) {
                return Err(MetricsError::NonCompactSet("simplex"));
            }
            Ok(total)
        }
        other => Err(MetricsError::NonCompactSet(other.kind())),
    }
}

/// `max_{x ∈ S} ⟨f, x' − x⟩` given `f = F(x')`.
pub fn gap_from_value(
    set: &InequalitySet,
    f: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<f64, MetricsError> {
    if f.len() != x.len() {
        return Err(MetricsError::DimensionMismatch {
            expected: x.len(),
            found: f.len(),
        });
    }
    Ok(f.dot(x) - linear_minimum(set, f)?)
}

pub fn gap(p: &ProblemSpec, x: &DVector<f64>) -> Result<f64, MetricsError> {
    check_dim(p.dim(), x.len())?;
    let set = p.feasible_set().ok_or(MetricsError::NoFeasibleSet)?;
    gap_from_value(set, &p.operator().apply(x), x)
}

/// `‖x − x*‖ / ‖x*‖`, or the plain distance when `x* = 0`.
pub fn relative_error(x: &DVector<f64>, x_star: &DVector<f64>) -> f64 {
    let dist = (x - x_star).norm();
    let scale = x_star.norm();
    if scale > 0.0 {
        dist / scale
    } else {
        dist
    }
}

pub fn feasibility_gap(x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    (x - y).norm()
}

/// `‖x − Π_C(x − F(x))‖` over the joint feasible set.
pub fn natural_residual(p: &ProblemSpec, x: &DVector<f64>) -> Result<f64, MetricsError> {
    check_dim(p.dim(), x.len())?;
    let set = p.feasible_set().ok_or(MetricsError::NoFeasibleSet)?;
    natural_residual_with(set, &p.operator().apply(x), x)
}

pub fn natural_residual_with(
    set: &InequalitySet,
    f: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<f64, MetricsError> {
    let projected = set.project(&(x - f))?;
    Ok((x - projected).norm())
}

/// `(1/2β)‖λ' − λ‖² + (β/2)‖y' − y‖²` between consecutive iterates.
pub fn lyapunov(
    lambda_prev: &DVector<f64>,
    lambda_cur: &DVector<f64>,
    y_prev: &DVector<f64>,
    y_cur: &DVector<f64>,
    beta: f64,
) -> f64 {
    (lambda_cur - lambda_prev).norm_squared() / (2.0 * beta)
        + 0.5 * beta * (y_cur - y_prev).norm_squared()
}

fn check_dim(expected: usize, found: usize) -> Result<(), MetricsError> {
    if expected == found {
        Ok(())
    } else {
        Err(MetricsError::DimensionMismatch { expected, found })
    }
}
