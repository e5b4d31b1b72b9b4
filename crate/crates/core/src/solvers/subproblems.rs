//! The x- and y-subproblems shared by the ACVI variants.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use super::SolverError;
use crate::barriers::YObjective;
use crate::geometry::{EqualityGeometry, InequalitySet};
use crate::problems::ProblemSpec;

/// Armijo sufficient-decrease constant for the damped Newton y-solver.
const ARMIJO: f64 = 1e-4;
const MIN_LINE_STEP: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XMode {
    /// Linear solve for affine operators, otherwise fixed-point steps until
    /// `σ ≤ tol`.
    Exact { tol: f64, step: f64, max_steps: usize },
    /// `steps` damped fixed-point steps `x ← x − step·G(x)`.
    Inexact { steps: usize, step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum YMode {
    /// Damped Newton on the barrier objective until `‖∇ψ‖ ≤ tol`.
    Newton { tol: f64, max_steps: usize },
    /// `steps` gradient-descent steps.
    Inexact { steps: usize, step: f64 },
    /// `Π≤(anchor)`.
    Projection,
}

/// The x-subproblem for a fixed problem and `β`, with the linear system
/// factored once when the operator is affine.
pub struct XSubproblem<'a> {
    p: &'a ProblemSpec,
    beta: f64,
    lu: Option<LU<f64, Dyn, Dyn>>,
}

impl<'a> XSubproblem<'a> {
    pub fn new(p: &'a ProblemSpec, beta: f64, factor: bool) -> Result<Self, SolverError> {
        let lu = match (factor, p.operator().as_affine()) {
            (true, Some(map)) => {
                let n = p.dim();
                let pcm = p.geometry().apply_pc_matrix(&map.m);
                let system = DMatrix::identity(n, n) + pcm / beta;
                let lu = system.lu();
                if !lu.is_invertible() {
                    return Err(SolverError::SingularSystem);
                }
                Some(lu)
            }
            _ => None,
        };
        Ok(XSubproblem { p, beta, lu })
    }

    fn geometry(&self) -> &EqualityGeometry {
        self.p.geometry()
    }

    /// `G(x) = x + (1/β)Pc F(x) − Pc y + (1/β)Pc λ − dc`.
    pub fn residual(&self, x: &DVector<f64>, y: &DVector<f64>, lambda: &DVector<f64>) -> DVector<f64> {
        let f = self.p.operator().apply(x);
        let inner = y - (f + lambda) / self.beta;
        x - self.geometry().apply_pc(&inner) - self.geometry().dc()
    }

    pub fn solve(
        &self,
        y: &DVector<f64>,
        lambda: &DVector<f64>,
        mode: XMode,
        warm: &DVector<f64>,
    ) -> Result<(DVector<f64>, f64), SolverError> {
        let x = match (mode, &self.lu) {
            (XMode::Exact { .. }, Some(lu)) => {
                let q = &self.p.operator().as_affine().expect("factored implies affine").q;
                let rhs = self.geometry().apply_pc(&(y - (q + lambda) / self.beta)) + self.geometry().dc();
                lu.solve(&rhs).ok_or(SolverError::SingularSystem)?
            }
            (XMode::Exact { tol, step, max_steps }, None) => {
                let mut x = warm.clone();
                let mut done = false;
                for _ in 0..max_steps {
                    let g = self.residual(&x, y, lambda);
                    let sigma = g.norm();
                    if !sigma.is_finite() {
                        return Err(SolverError::NonFiniteIterate { stage: "x" });
                    }
                    if sigma <= tol {
                        done = true;
                        break;
                    }
                    x.axpy(-step, &g, 1.0);
                }
                if !done {
                    let residual = self.residual(&x, y, lambda).norm();
                    if residual > tol {
                        return Err(SolverError::NoConvergence {
                            stage: "x",
                            steps: max_steps,
                            residual,
                        });
                    }
                }
                x
            }
            (XMode::Inexact { steps, step }, _) => {
                let mut x = warm.clone();
                for _ in 0..steps {
                    let g = self.residual(&x, y, lambda);
                    x.axpy(-step, &g, 1.0);
                }
                x
            }
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFiniteIterate { stage: "x" });
        }
        let sigma = self.residual(&x, y, lambda).norm();
        Ok((x, sigma))
    }
}

/// One-shot x-subproblem solve; builds (and discards) the factorization.
pub fn solve_x_subproblem(
    p: &ProblemSpec,
    y: &DVector<f64>,
    lambda: &DVector<f64>,
    beta: f64,
    mode: XMode,
    warm: &DVector<f64>,
) -> Result<(DVector<f64>, f64), SolverError> {
    let factor = matches!(mode, XMode::Exact { .. });
    XSubproblem::new(p, beta, factor)?.solve(y, lambda, mode, warm)
}

pub fn project_y(constraints: &InequalitySet, anchor: &DVector<f64>) -> Result<DVector<f64>, SolverError> {
    Ok(constraints.project(anchor)?)
}

/// Returns the new `y` and the surrogate `‖∇ψ(y)‖² / 2β`.
pub fn solve_y_subproblem(
    obj: &YObjective<'_>,
    mode: YMode,
    warm: &DVector<f64>,
) -> Result<(DVector<f64>, f64), SolverError> {
    let y = match mode {
        YMode::Projection => return Ok((project_y(obj.constraints, obj.anchor)?, 0.0)),
        YMode::Inexact { steps, step } => {
            let mut y = warm.clone();
            for _ in 0..steps {
                let (_, g) = obj.eval(&y)?;
                y.axpy(-step, &g, 1.0);
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(SolverError::NonFiniteIterate { stage: "y" });
                }
            }
            y
        }
        YMode::Newton { tol, max_steps } => newton(obj, warm, tol, max_steps)?,
    };
    let (_, g) = obj.eval(&y)?;
    let eps = g.norm_squared() / (2.0 * obj.beta);
    if !eps.is_finite() {
        return Err(SolverError::NonFiniteIterate { stage: "y" });
    }
    Ok((y, eps))
}

fn newton(
    obj: &YObjective<'_>,
    warm: &DVector<f64>,
    tol: f64,
    max_steps: usize,
) -> Result<DVector<f64>, SolverError> {
    let beta = obj.beta;
    let n = warm.len();
    let mut y = warm.clone();
    for _ in 0..max_steps {
        let terms = obj.barrier_terms(&y, true)?;
        let diff = &y - obj.anchor;
        let value = terms.value + 0.5 * beta * diff.norm_squared();
        let g = &terms.gradient + &diff * beta;
        if g.norm() <= tol {
            break;
        }
        let dir = match obj.constraints {
            InequalitySet::Box { .. } => {
                let diag = terms.diag_curvature.as_ref().expect("box curvature");
                DVector::from_fn(n, |i, _| -g[i] / (beta + diag[i]))
            }
            InequalitySet::Halfspaces { a, .. } => {
                let mut h = DMatrix::identity(n, n) * beta;
                for (j, &w) in terms.row_curvature.iter().enumerate() {
                    let row = a.row(j).transpose();
                    h.ger(w, &row, &row, 1.0);
                }
                solve_spd(h, &g)?
            }
            InequalitySet::Smooth(_) => {
                // Gauss-Newton: the constraint Hessians are not available.
                let mut h = DMatrix::identity(n, n) * beta;
                for (w, grad) in terms.row_curvature.iter().zip(&terms.smooth_grads) {
                    h.ger(*w, grad, grad, 1.0);
                }
                solve_spd(h, &g)?
            }
            _ => -&g / beta,
        };
        let slope = g.dot(&dir);
        let mut s = 1.0;
        let mut accepted = None;
        while s >= MIN_LINE_STEP {
            let cand = &y + &dir * s;
            if let Ok((v, _)) = obj.eval(&cand) {
                if v <= value + ARMIJO * s * slope {
                    accepted = Some((cand, v));
                    break;
                }
            }
            s *= 0.5;
        }
        match accepted {
            Some((next, v)) => {
                y = next;
                // the value has hit rounding level
                if v >= value {
                    break;
                }
            }
            None => break,
        }
    }
    Ok(y)
}

fn solve_spd(h: DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>, SolverError> {
    let chol = h.cholesky().ok_or(SolverError::SingularSystem)?;
    Ok(-chol.solve(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barriers::BarrierKind;
    use crate::problems::{make_2d_bg, Operator};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn exact_x_on_bilinear() {
        let p = make_2d_bg();
        let mode = XMode::Exact { tol: 1e-12, step: 0.1, max_steps: 10 };
        let (x, sigma) = solve_x_subproblem(&p, &v(&[2.0, 2.0]), &v(&[0.0, 0.0]), 0.5, mode, &v(&[0.0, 0.0])).unwrap();
        assert!((x - v(&[-0.4, 1.2])).amax() < 1e-14);
        assert!(sigma <= 1e-12);
    }

    #[test]
    fn zero_operator_x_is_shifted_y() {
        let p = ProblemSpec::builder("zero", 3, Operator::zero(3)).build().unwrap();
        let y = v(&[1.0, 2.0, 3.0]);
        let lambda = v(&[0.5, -0.5, 1.0]);
        let beta = 2.0;
        for mode in [
            XMode::Exact { tol: 1e-12, step: 1.0, max_steps: 10 },
            XMode::Inexact { steps: 1, step: 1.0 },
        ] {
            let (x, _) = solve_x_subproblem(&p, &y, &lambda, beta, mode, &DVector::zeros(3)).unwrap();
            assert!((x - (&y - &lambda / beta)).amax() < 1e-15);
        }
    }

    #[test]
    fn inexact_x_approaches_exact() {
        let p = make_2d_bg();
        let (y, lambda) = (v(&[1.0, -0.3]), v(&[0.2, 0.1]));
        let exact = solve_x_subproblem(&p, &y, &lambda, 0.5, XMode::Exact { tol: 1e-12, step: 0.1, max_steps: 1 }, &y).unwrap().0;
        let inexact = solve_x_subproblem(&p, &y, &lambda, 0.5, XMode::Inexact { steps: 2000, step: 0.1 }, &y).unwrap().0;
        assert!((exact - inexact).amax() < 1e-8);
    }

    #[test]
    fn projection_mode_clamps() {
        let set = InequalitySet::uniform_box(2, -0.4, 2.4).unwrap();
        let anchor = v(&[3.0, 1.0]);
        let obj = YObjective::new(BarrierKind::Standard, 1.0, 0.5, &anchor, &set).unwrap();
        let (y, eps) = solve_y_subproblem(&obj, YMode::Projection, &anchor).unwrap();
        assert_eq!(y, v(&[2.4, 1.0]));
        assert_eq!(eps, 0.0);
    }

    #[test]
    fn unconstrained_y_is_anchor() {
        let set = InequalitySet::Unconstrained;
        let anchor = v(&[0.7, -1.1]);
        let obj = YObjective::new(BarrierKind::Standard, 1.0, 0.5, &anchor, &set).unwrap();
        let (y, _) = solve_y_subproblem(&obj, YMode::Newton { tol: 1e-12, max_steps: 10 }, &DVector::zeros(2)).unwrap();
        assert!((y - &anchor).amax() < 1e-14);
    }

    #[test]
    fn newton_matches_hand_minimizer_in_one_dimension() {
        // μ/(y + 1) = β(y − a) on y > −1 with μ = 1, β = 1, a = 0 gives y = (√5 − 1)/2.
        let set = InequalitySet::boxed(v(&[-1.0]), v(&[f64::INFINITY])).unwrap();
        let anchor = v(&[0.0]);
        let obj = YObjective::new(BarrierKind::Standard, 1.0, 1.0, &anchor, &set).unwrap();
        let (y, eps) = solve_y_subproblem(&obj, YMode::Newton { tol: 1e-13, max_steps: 100 }, &v(&[5.0])).unwrap();
        assert!((y[0] - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-12);
        assert!(eps < 1e-24);
    }
}
