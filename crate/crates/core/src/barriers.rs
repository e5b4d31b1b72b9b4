//! Log-barrier maps and the barrier-penalized y-subproblem objective.
//!
//! The standard barrier is `-μ log(-z)`. The extended barrier agrees with it
//! for `z ≤ -e^{-c/μ}` and continues linearly with matching slope
//! `μ e^{c/μ}` beyond that point, so it is finite on the whole real line.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::InequalitySet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BarrierError {
    #[error("standard barrier evaluated outside its domain (z = {z:e} ≥ 0)")]
    Domain { z: f64 },
    #[error("barrier parameter μ must be positive, got {0}")]
    NonPositiveMu(f64),
    #[error("extended barrier constant must be finite, got {0}")]
    NonFiniteConstant(f64),
    #[error("{0} constraints cannot be handled by a barrier")]
    Unsupported(&'static str),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BarrierKind {
    Standard,
    Extended { c: f64 },
}

impl BarrierKind {
    pub fn validate(&self) -> Result<(), BarrierError> {
        match *self {
            BarrierKind::Extended { c } if !c.is_finite() => Err(BarrierError::NonFiniteConstant(c)),
            _ => Ok(()),
        }
    }

    /// Junction point `-e^{-c/μ}` of the extended barrier.
    fn junction(c: f64, mu: f64) -> f64 {
        -(-c / mu).exp()
    }
}

fn check_mu(mu: f64) -> Result<(), BarrierError> {
    if mu > 0.0 {
        Ok(())
    } else {
        Err(BarrierError::NonPositiveMu(mu))
    }
}

pub fn barrier_value(kind: BarrierKind, z: f64, mu: f64) -> Result<f64, BarrierError> {
    check_mu(mu)?;
    match kind {
        BarrierKind::Standard => {
            if z < 0.0 {
                Ok(-mu * (-z).ln())
            } else {
                Err(BarrierError::Domain { z })
            }
        }
        BarrierKind::Extended { c } => {
            if z <= BarrierKind::junction(c, mu) {
                Ok(-mu * (-z).ln())
            } else {
                Ok(mu * (c / mu).exp() * z + mu + c)
            }
        }
    }
}

pub fn barrier_grad(kind: BarrierKind, z: f64, mu: f64) -> Result<f64, BarrierError> {
    check_mu(mu)?;
    match kind {
        BarrierKind::Standard => {
            if z < 0.0 {
                Ok(-mu / z)
            } else {
                Err(BarrierError::Domain { z })
            }
        }
        BarrierKind::Extended { c } => {
            if z <= BarrierKind::junction(c, mu) {
                Ok(-mu / z)
            } else {
                Ok(mu * (c / mu).exp())
            }
        }
    }
}

/// Second derivative; zero on the linear branch of the extended barrier.
pub fn barrier_curvature(kind: BarrierKind, z: f64, mu: f64) -> Result<f64, BarrierError> {
    check_mu(mu)?;
    match kind {
        BarrierKind::Standard => {
            if z < 0.0 {
                Ok(mu / (z * z))
            } else {
                Err(BarrierError::Domain { z })
            }
        }
        BarrierKind::Extended { c } => {
            if z <= BarrierKind::junction(c, mu) {
                Ok(mu / (z * z))
            } else {
                Ok(0.0)
            }
        }
    }
}

/// `c = ψ(y_k) + τ`, the per-step extended-barrier constant.
pub fn extended_barrier_constant(psi_at_yk: f64, tau: f64) -> f64 {
    psi_at_yk + tau
}

/// `Σ ℘(φ_i(y), μ) + (β/2)‖y − anchor‖²` for a fixed snapshot of
/// `(μ, β, anchor)`; `anchor = x_{k+1} + λ_k/β`.
#[derive(Debug, Clone, Copy)]
pub struct YObjective<'a> {
    pub barrier: BarrierKind,
    pub mu: f64,
    pub beta: f64,
    pub anchor: &'a DVector<f64>,
    pub constraints: &'a InequalitySet,
}

/// Per-constraint first and second barrier derivatives, already composed with
/// the constraint gradients, plus the barrier sum.
pub(crate) struct BarrierTerms {
    pub value: f64,
    pub gradient: DVector<f64>,
    /// Diagonal of `Σ ℘''(φ_i) ∇φ_i ∇φ_iᵀ` when it is diagonal (box).
    pub diag_curvature: Option<DVector<f64>>,
    /// ℘'' weights per halfspace/smooth row, for dense curvature assembly.
    pub row_curvature: Vec<f64>,
    /// Gradients of smooth constraints (needed for curvature assembly).
    pub smooth_grads: Vec<DVector<f64>>,
}

impl<'a> YObjective<'a> {
    pub fn new(
        barrier: BarrierKind,
        mu: f64,
        beta: f64,
        anchor: &'a DVector<f64>,
        constraints: &'a InequalitySet,
    ) -> Result<Self, BarrierError> {
        check_mu(mu)?;
        barrier.validate()?;
        if let InequalitySet::Simplex { .. } = constraints {
            return Err(BarrierError::Unsupported("simplex"));
        }
        Ok(YObjective {
            barrier,
            mu,
            beta,
            anchor,
            constraints,
        })
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    pub(crate) fn barrier_terms(
        &self,
        y: &DVector<f64>,
        with_curvature: bool,
    ) -> Result<BarrierTerms, BarrierError> {
        let n = y.len();
        if n != self.anchor.len() {
            return Err(BarrierError::DimensionMismatch {
                expected: self.anchor.len(),
                found: n,
            });
        }
        let (kind, mu) = (self.barrier, self.mu);
        let mut value = 0.0;
        let mut gradient = DVector::zeros(n);
        let mut diag_curvature = None;
        let mut row_curvature = Vec::new();
        let mut smooth_grads = Vec::new();
        match self.constraints {
            InequalitySet::Unconstrained => {}
            InequalitySet::Box { lo, hi } => {
                let mut diag = DVector::zeros(n);
                for i in 0..n {
                    // lo - y ≤ 0 and y - hi ≤ 0
                    if lo[i].is_finite() {
                        let z = lo[i] - y[i];
                        value += barrier_value(kind, z, mu)?;
                        gradient[i] -= barrier_grad(kind, z, mu)?;
                        if with_curvature {
                            diag[i] += barrier_curvature(kind, z, mu)?;
                        }
                    }
                    if hi[i].is_finite() {
                        let z = y[i] - hi[i];
                        value += barrier_value(kind, z, mu)?;
                        gradient[i] += barrier_grad(kind, z, mu)?;
                        if with_curvature {
                            diag[i] += barrier_curvature(kind, z, mu)?;
                        }
                    }
                }
                if with_curvature {
                    diag_curvature = Some(diag);
                }
            }
            InequalitySet::Halfspaces { a, b } => {
                let z = a * y - b;
                let mut w = DVector::zeros(z.len());
                for j in 0..z.len() {
                    value += barrier_value(kind, z[j], mu)?;
                    w[j] = barrier_grad(kind, z[j], mu)?;
                    if with_curvature {
                        row_curvature.push(barrier_curvature(kind, z[j], mu)?);
                    }
                }
                gradient += a.tr_mul(&w);
            }
            InequalitySet::Smooth(cs) => {
                for c in cs {
                    let (z, g) = c.eval(y);
                    value += barrier_value(kind, z, mu)?;
                    gradient.axpy(barrier_grad(kind, z, mu)?, &g, 1.0);
                    if with_curvature {
                        row_curvature.push(barrier_curvature(kind, z, mu)?);
                        smooth_grads.push(g);
                    }
                }
            }
            InequalitySet::Simplex { .. } => return Err(BarrierError::Unsupported("simplex")),
        }
        Ok(BarrierTerms {
            value,
            gradient,
            diag_curvature,
            row_curvature,
            smooth_grads,
        })
    }

    /// Objective value and gradient at `y`.
    pub fn eval(&self, y: &DVector<f64>) -> Result<(f64, DVector<f64>), BarrierError> {
        let terms = self.barrier_terms(y, false)?;
        let diff = y - self.anchor;
        let value = terms.value + 0.5 * self.beta * diff.norm_squared();
        let gradient = terms.gradient + diff * self.beta;
        Ok((value, gradient))
    }
}

pub fn y_objective_eval(
    obj: &YObjective<'_>,
    y: &DVector<f64>,
) -> Result<(f64, DVector<f64>), BarrierError> {
    obj.eval(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_values() {
        assert_eq!(barrier_value(BarrierKind::Standard, -1.0, 5.0).unwrap(), 0.0);
        assert_eq!(barrier_grad(BarrierKind::Standard, -1.0, 2.0).unwrap(), 2.0);
        assert!(matches!(
            barrier_value(BarrierKind::Standard, 0.0, 1.0),
            Err(BarrierError::Domain { .. })
        ));
        assert!(matches!(
            barrier_grad(BarrierKind::Standard, 0.5, 1.0),
            Err(BarrierError::Domain { .. })
        ));
    }

    #[test]
    fn extended_junction_and_linear_branch() {
        let (c, mu) = (0.7, 0.3);
        let kind = BarrierKind::Extended { c };
        let zj = -(-c / mu).exp();
        let v = barrier_value(kind, zj, mu).unwrap();
        assert!((v - c).abs() < 1e-12);
        let linear_at_junction = mu * (c / mu).exp() * zj + mu + c;
        assert!((linear_at_junction - c).abs() < 1e-12);

        let ext = BarrierKind::Extended { c: 1.0 };
        assert!((barrier_value(ext, 0.0, 1.0).unwrap() - 2.0).abs() < 1e-15);
        let zero = BarrierKind::Extended { c: 0.0 };
        assert!((barrier_grad(zero, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        // both one-sided slopes equal μ e^{c/μ} at the junction
        let slope = mu * (c / mu).exp();
        assert!((barrier_grad(kind, zj, mu).unwrap() - slope).abs() < 1e-12 * slope);
        assert_eq!(barrier_grad(kind, zj * (1.0 - 1e-15), mu).unwrap(), slope);
    }

    #[test]
    fn nonfinite_constant_rejected() {
        let a = DVector::zeros(1);
        let s = InequalitySet::Unconstrained;
        assert!(matches!(
            YObjective::new(BarrierKind::Extended { c: f64::NAN }, 1.0, 1.0, &a, &s),
            Err(BarrierError::NonFiniteConstant(_))
        ));
    }

    #[test]
    fn constant_rule() {
        assert_eq!(extended_barrier_constant(2.0, 0.5), 2.5);
        assert_eq!(extended_barrier_constant(0.0, 0.0), 0.0);
        // a larger ψ gives a larger c, which shrinks the slab e^{-c/μ}
        let mu = 0.5;
        let w = |c: f64| (-c / mu).exp();
        assert!(w(extended_barrier_constant(3.0, 0.1)) <= w(extended_barrier_constant(2.0, 0.1)));
    }

    #[test]
    fn empty_constraint_set_is_pure_quadratic() {
        let anchor = DVector::from_vec(vec![1.0, -2.0]);
        let s = InequalitySet::Unconstrained;
        let obj = YObjective::new(BarrierKind::Standard, 1.0, 0.5, &anchor, &s).unwrap();
        let y = DVector::from_vec(vec![3.0, 0.0]);
        let (v, g) = obj.eval(&y).unwrap();
        assert!((v - 0.25 * 8.0).abs() < 1e-15);
        assert!((g - (&y - &anchor) * 0.5).norm() < 1e-15);
    }

    #[test]
    fn two_d_box_at_anchor() {
        let anchor = DVector::from_vec(vec![1.0, 1.0]);
        let s = InequalitySet::uniform_box(2, -0.4, 2.4).unwrap();
        let obj = YObjective::new(BarrierKind::Standard, 3.0, 0.5, &anchor, &s).unwrap();
        let (v, g) = obj.eval(&anchor).unwrap();
        assert!((v - (-12.0 * 1.4f64.ln())).abs() < 1e-12);
        assert!(g.norm() < 1e-15);
    }

    #[test]
    fn simplex_is_not_a_barrier_set() {
        let anchor = DVector::zeros(2);
        let s = InequalitySet::simplex(vec![0..2]).unwrap();
        assert!(YObjective::new(BarrierKind::Standard, 1.0, 1.0, &anchor, &s).is_err());
    }
}
