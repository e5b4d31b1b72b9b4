//! The ACVI family: exact ACVI, inexact ACVI with warm starts, and the
//! projection variant without a barrier.
//!
//! All three share one driver. Per inner step the x-subproblem is solved on
//! the affine set, the y-subproblem handles the inequalities (barrier or
//! projection), and the multiplier takes the step `λ += β(x − y)`.

mod subproblems;

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use subproblems::{
    project_y, solve_x_subproblem, solve_y_subproblem, XMode, XSubproblem, YMode,
};

use crate::barriers::{extended_barrier_constant, BarrierError, BarrierKind, YObjective};
use crate::geometry::{GeometryError, InequalitySet};
use crate::metrics::{self, IterationRecord};
use crate::problems::{ProblemError, ProblemSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("x-subproblem linear system is singular")]
    SingularSystem,
    #[error("non-finite iterate in the {stage}-subproblem (step size too large?)")]
    NonFiniteIterate { stage: &'static str },
    #[error("{stage}-subproblem did not converge in {steps} steps (residual {residual:e})")]
    NoConvergence {
        stage: &'static str,
        steps: usize,
        residual: f64,
    },
    #[error(transparent)]
    Barrier(#[from] BarrierError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Acvi,
    Iacvi,
    Pacvi,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Acvi => "acvi",
            Algorithm::Iacvi => "iacvi",
            Algorithm::Pacvi => "pacvi",
        }
    }
}

fn default_mu_init() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    0.5
}
fn default_iters() -> usize {
    20
}
fn default_step() -> f64 {
    0.1
}
fn default_barrier() -> BarrierKind {
    BarrierKind::Standard
}
fn default_tau() -> f64 {
    1e-3
}
fn default_tol() -> f64 {
    1e-10
}
fn default_max_exact_steps() -> usize {
    100_000
}
fn default_divergence() -> f64 {
    1e6
}

/// Run parameters. Only `algorithm` and `beta` are mandatory when
/// deserializing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub beta: f64,
    /// `μ₋₁`; the first outer loop runs at `δ·μ₋₁`.
    #[serde(default = "default_mu_init")]
    pub mu_init: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// `T`
    #[serde(default = "default_iters")]
    pub outer_iters: usize,
    /// `K`
    #[serde(default = "default_iters")]
    pub inner_iters: usize,
    /// `K₀`, the inner iteration count of the first outer loop.
    #[serde(default)]
    pub first_inner_iters: Option<usize>,
    /// `ℓ_x`
    #[serde(default = "default_iters")]
    pub x_steps: usize,
    /// `ℓ_y`
    #[serde(default = "default_iters")]
    pub y_steps: usize,
    /// `ℓ₀`, both step counts for the very first inner iteration.
    #[serde(default)]
    pub first_steps: Option<usize>,
    #[serde(default = "default_step")]
    pub step_x: f64,
    #[serde(default = "default_step")]
    pub step_y: f64,
    #[serde(default = "default_barrier")]
    pub barrier: BarrierKind,
    /// Recompute the extended-barrier constant as `ψ(y_k) + τ` every step.
    #[serde(default)]
    pub adaptive_c: bool,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Solve the x-subproblem exactly (linear solve for affine operators).
    #[serde(default)]
    pub exact_x: bool,
    #[serde(default = "default_tol")]
    pub tol_x: f64,
    #[serde(default = "default_tol")]
    pub tol_y: f64,
    #[serde(default = "default_max_exact_steps")]
    pub max_exact_steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub max_wall_ms: Option<u64>,
    #[serde(default)]
    pub target_rel_err: Option<f64>,
    /// Cap on the total number of inner iterations.
    #[serde(default)]
    pub max_iters: Option<usize>,
    /// Stop the outer loop once `μ < ratio·μ₋₁` (off by default).
    #[serde(default)]
    pub mu_floor_ratio: Option<f64>,
    #[serde(default = "default_divergence")]
    pub divergence_threshold: f64,
    #[serde(default)]
    pub record_iterates: bool,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, beta: f64) -> Self {
        RunConfig {
            algorithm,
            beta,
            mu_init: default_mu_init(),
            delta: default_delta(),
            outer_iters: default_iters(),
            inner_iters: default_iters(),
            first_inner_iters: None,
            x_steps: default_iters(),
            y_steps: default_iters(),
            first_steps: None,
            step_x: default_step(),
            step_y: default_step(),
            barrier: default_barrier(),
            adaptive_c: false,
            tau: default_tau(),
            exact_x: algorithm == Algorithm::Acvi,
            tol_x: default_tol(),
            tol_y: default_tol(),
            max_exact_steps: default_max_exact_steps(),
            seed: 0,
            max_wall_ms: None,
            target_rel_err: None,
            max_iters: None,
            mu_floor_ratio: None,
            divergence_threshold: default_divergence(),
            record_iterates: false,
        }
    }

    /// Same steps for both subproblems.
    pub fn with_steps(mut self, steps: usize, step: f64) -> Self {
        self.x_steps = steps;
        self.y_steps = steps;
        self.step_x = step;
        self.step_y = step;
        self
    }

    pub fn validate(&self, p: &ProblemSpec) -> Result<(), SolverError> {
        fn positive(field: &'static str, v: f64) -> Result<(), SolverError> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(SolverError::InvalidConfig {
                    field,
                    reason: format!("must be positive and finite, got {v}"),
                })
            }
        }
        fn at_least_one(field: &'static str, v: usize) -> Result<(), SolverError> {
            if v >= 1 {
                Ok(())
            } else {
                Err(SolverError::InvalidConfig {
                    field,
                    reason: "must be at least 1".into(),
                })
            }
        }
        positive("beta", self.beta)?;
        positive("step_x", self.step_x)?;
        positive("step_y", self.step_y)?;
        positive("tol_x", self.tol_x)?;
        positive("tol_y", self.tol_y)?;
        at_least_one("inner_iters", self.inner_iters)?;
        at_least_one("x_steps", self.x_steps)?;
        at_least_one("y_steps", self.y_steps)?;
        if let Some(k0) = self.first_inner_iters {
            at_least_one("first_inner_iters", k0)?;
        }
        if let Some(l0) = self.first_steps {
            at_least_one("first_steps", l0)?;
        }
        if self.algorithm != Algorithm::Pacvi {
            positive("mu_init", self.mu_init)?;
            at_least_one("outer_iters", self.outer_iters)?;
            if !(self.delta > 0.0 && self.delta < 1.0) {
                return Err(SolverError::InvalidConfig {
                    field: "delta",
                    reason: format!("must lie in (0, 1), got {}", self.delta),
                });
            }
            if !(self.tau >= 0.0) {
                return Err(SolverError::InvalidConfig {
                    field: "tau",
                    reason: format!("must be nonnegative, got {}", self.tau),
                });
            }
            self.barrier.validate().map_err(|e| SolverError::InvalidConfig {
                field: "barrier",
                reason: e.to_string(),
            })?;
            if let InequalitySet::Simplex { .. } = p.inequality() {
                return Err(SolverError::InvalidConfig {
                    field: "algorithm",
                    reason: "barrier variants need simplex blocks split into equality rows and nonnegativity".into(),
                });
            }
        } else if let InequalitySet::Smooth(_) = p.inequality() {
            return Err(SolverError::InvalidConfig {
                field: "algorithm",
                reason: "pacvi needs a directly projectable inequality set".into(),
            });
        }
        if let Some(r) = self.target_rel_err {
            positive("target_rel_err", r)?;
            if p.known_solution().is_none() {
                return Err(SolverError::InvalidConfig {
                    field: "target_rel_err",
                    reason: "problem has no known solution".into(),
                });
            }
        }
        if let Some(m) = self.max_iters {
            at_least_one("max_iters", m)?;
        }
        if let Some(r) = self.mu_floor_ratio {
            positive("mu_floor_ratio", r)?;
        }
        positive("divergence_threshold", self.divergence_threshold)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub lambda: DVector<f64>,
    pub mu: f64,
    pub t: usize,
    pub k: usize,
    /// `‖G(x)‖` of the last x-solve.
    pub sigma: f64,
    /// `‖∇ψ(y)‖² / 2β` of the last y-solve.
    pub eps: f64,
}

/// Starting point `(x₀, y₀, λ₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub lambda: DVector<f64>,
}

impl InitialState {
    /// `x₀ = y₀ = x`, `λ₀ = 0`.
    pub fn at(x: DVector<f64>) -> Self {
        let n = x.len();
        InitialState {
            y: x.clone(),
            x,
            lambda: DVector::zeros(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Iteration budget (or μ floor) exhausted.
    Completed,
    /// Target relative error reached.
    Tolerance,
    /// Wall-clock budget exhausted.
    Budget,
    /// `‖x − y‖` exceeded the divergence threshold.
    Diverged,
}

/// `(x, y, λ)` after one inner step.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub lambda: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<IterationRecord>,
    /// Filled only with `record_iterates`.
    pub iterates: Vec<Iterate>,
    pub final_state: SolverState,
    pub termination: Termination,
    pub wall_ms: f64,
}

impl Trajectory {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    /// Index (1-based count) of the first record whose relative error is at
    /// most `target`.
    pub fn iterations_to(&self, target: f64) -> Option<usize> {
        self.records
            .iter()
            .position(|r| r.rel_err.is_some_and(|e| e <= target))
            .map(|i| i + 1)
    }
}

pub fn run(p: &ProblemSpec, cfg: &RunConfig) -> Result<Trajectory, SolverError> {
    let init = InitialState::at(p.initial_point(cfg.seed));
    run_from(p, cfg, init)
}

pub fn run_from(p: &ProblemSpec, cfg: &RunConfig, init: InitialState) -> Result<Trajectory, SolverError> {
    cfg.validate(p)?;
    for v in [&init.x, &init.y, &init.lambda] {
        if v.len() != p.dim() {
            return Err(ProblemError::DimensionMismatch {
                expected: p.dim(),
                found: v.len(),
            }
            .into());
        }
    }
    Driver::new(p, cfg)?.run(init)
}

fn expect_algorithm(cfg: &RunConfig, want: Algorithm) -> Result<(), SolverError> {
    if cfg.algorithm == want {
        Ok(())
    } else {
        Err(SolverError::InvalidConfig {
            field: "algorithm",
            reason: format!("expected {}, got {}", want.name(), cfg.algorithm.name()),
        })
    }
}

/// Exact ACVI: both subproblems solved to tolerance.
pub fn acvi_run(p: &ProblemSpec, cfg: &RunConfig) -> Result<Trajectory, SolverError> {
    expect_algorithm(cfg, Algorithm::Acvi)?;
    run(p, cfg)
}

/// Inexact ACVI: `ℓ` warm-started steps per subproblem.
pub fn iacvi_run(p: &ProblemSpec, cfg: &RunConfig) -> Result<Trajectory, SolverError> {
    expect_algorithm(cfg, Algorithm::Iacvi)?;
    run(p, cfg)
}

/// Projection ACVI: single loop over `K`, `y = Π≤(x + λ/β)`.
pub fn pacvi_run(p: &ProblemSpec, cfg: &RunConfig) -> Result<Trajectory, SolverError> {
    expect_algorithm(cfg, Algorithm::Pacvi)?;
    run(p, cfg)
}

struct Driver<'a> {
    p: &'a ProblemSpec,
    cfg: &'a RunConfig,
    xsolver: XSubproblem<'a>,
    start: Instant,
}

impl<'a> Driver<'a> {
    fn new(p: &'a ProblemSpec, cfg: &'a RunConfig) -> Result<Self, SolverError> {
        let factor = cfg.exact_x || cfg.algorithm == Algorithm::Acvi;
        Ok(Driver {
            p,
            cfg,
            xsolver: XSubproblem::new(p, cfg.beta, factor)?,
            start: Instant::now(),
        })
    }

    fn elapsed_ms(&self) -> f64 {
        self.start.elapsed().as_secs_f64() * 1e3
    }

    fn x_mode(&self, first: bool) -> XMode {
        let cfg = self.cfg;
        if cfg.exact_x || cfg.algorithm == Algorithm::Acvi {
            XMode::Exact {
                tol: cfg.tol_x,
                step: cfg.step_x,
                max_steps: cfg.max_exact_steps,
            }
        } else {
            let steps = if first { cfg.first_steps.unwrap_or(cfg.x_steps) } else { cfg.x_steps };
            XMode::Inexact { steps, step: cfg.step_x }
        }
    }

    fn y_mode(&self, first: bool) -> YMode {
        let cfg = self.cfg;
        match cfg.algorithm {
            Algorithm::Pacvi => YMode::Projection,
            Algorithm::Acvi => YMode::Newton {
                tol: cfg.tol_y,
                max_steps: cfg.max_exact_steps,
            },
            Algorithm::Iacvi => {
                let steps = if first { cfg.first_steps.unwrap_or(cfg.y_steps) } else { cfg.y_steps };
                YMode::Inexact { steps, step: cfg.step_y }
            }
        }
    }

    /// Barrier in effect for the next y-solve.
    fn barrier_for(&self, current: BarrierKind, mu: f64, y: &DVector<f64>, anchor: &DVector<f64>) -> BarrierKind {
        match (self.cfg.adaptive_c, current) {
            (true, BarrierKind::Extended { c }) => {
                let psi = YObjective::new(BarrierKind::Standard, mu, self.cfg.beta, anchor, self.p.inequality())
                    .and_then(|obj| obj.eval(y));
                match psi {
                    Ok((value, _)) if value.is_finite() => BarrierKind::Extended {
                        c: extended_barrier_constant(value, self.cfg.tau),
                    },
                    _ => BarrierKind::Extended { c },
                }
            }
            _ => current,
        }
    }

    fn record(&self, state: &SolverState, lyapunov: f64) -> IterationRecord {
        let p = self.p;
        let x = &state.x;
        let f = p.operator().apply(x);
        let (gap, nat_res) = match p.feasible_set() {
            Some(set) => (
                metrics::gap_from_value(set, &f, x).ok(),
                metrics::natural_residual_with(set, &f, x).ok(),
            ),
            None => (None, None),
        };
        IterationRecord {
            t: state.t,
            k: state.k,
            mu: state.mu,
            gap,
            rel_err: p.known_solution().map(|xs| metrics::relative_error(x, xs)),
            feas: metrics::feasibility_gap(x, &state.y),
            nat_res,
            sigma: state.sigma,
            eps_surr: state.eps,
            lyapunov,
            elapsed_ms: self.elapsed_ms(),
        }
    }

    fn run(self, init: InitialState) -> Result<Trajectory, SolverError> {
        let cfg = self.cfg;
        let pacvi = cfg.algorithm == Algorithm::Pacvi;
        let mut state = SolverState {
            x: init.x,
            y: init.y,
            lambda: init.lambda,
            mu: if pacvi { 0.0 } else { cfg.mu_init },
            t: 0,
            k: 0,
            sigma: f64::NAN,
            eps: f64::NAN,
        };
        let mut barrier = cfg.barrier;
        let mut records = Vec::new();
        let mut iterates = Vec::new();
        let mut termination = Termination::Completed;
        let outer = if pacvi { 1 } else { cfg.outer_iters };

        'outer: for t in 0..outer {
            if !pacvi {
                let next = state.mu * cfg.delta;
                if cfg.mu_floor_ratio.is_some_and(|r| next < r * cfg.mu_init) {
                    log::debug!("μ floor reached at t = {t}");
                    break;
                }
                state.mu = next;
            }
            let inner = match cfg.first_inner_iters {
                Some(k0) if t == 0 => k0,
                _ => cfg.inner_iters,
            };
            for k in 0..inner {
                let first = t == 0 && k == 0;
                let (x, sigma) = self.xsolver.solve(&state.y, &state.lambda, self.x_mode(first), &state.x)?;
                let anchor = &x + &state.lambda / cfg.beta;
                let (y, eps) = if pacvi {
                    (project_y(self.p.inequality(), &anchor)?, 0.0)
                } else {
                    barrier = self.barrier_for(barrier, state.mu, &state.y, &anchor);
                    let obj = YObjective::new(barrier, state.mu, cfg.beta, &anchor, self.p.inequality())?;
                    solve_y_subproblem(&obj, self.y_mode(first), &state.y)?
                };
                let lambda = &state.lambda + (&x - &y) * cfg.beta;
                let lyapunov = metrics::lyapunov(&state.lambda, &lambda, &state.y, &y, cfg.beta);
                state = SolverState {
                    x,
                    y,
                    lambda,
                    mu: state.mu,
                    t,
                    k,
                    sigma,
                    eps,
                };
                let rec = self.record(&state, lyapunov);
                let feas = rec.feas;
                let rel_err = rec.rel_err;
                records.push(rec);
                if cfg.record_iterates {
                    iterates.push(Iterate {
                        x: state.x.clone(),
                        y: state.y.clone(),
                        lambda: state.lambda.clone(),
                    });
                }
                if !(feas <= cfg.divergence_threshold) {
                    log::info!("diverged at t = {t}, k = {k}: ‖x − y‖ = {feas:e}");
                    termination = Termination::Diverged;
                    break 'outer;
                }
                if let (Some(target), Some(e)) = (cfg.target_rel_err, rel_err) {
                    if e <= target {
                        termination = Termination::Tolerance;
                        break 'outer;
                    }
                }
                if cfg.max_wall_ms.is_some_and(|ms| self.elapsed_ms() >= ms as f64) {
                    termination = Termination::Budget;
                    break 'outer;
                }
                if cfg.max_iters.is_some_and(|m| records.len() >= m) {
                    break 'outer;
                }
            }
        }
        log::debug!(
            "{} finished after {} iterations: {:?}",
            cfg.algorithm.name(),
            records.len(),
            termination
        );
        Ok(Trajectory {
            records,
            iterates,
            final_state: state,
            termination,
            wall_ms: self.elapsed_ms(),
        })
    }
}
