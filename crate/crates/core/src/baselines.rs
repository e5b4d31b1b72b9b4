//! Projected and mirror first-order baselines. Two-player updates are
//! simultaneous.

use std::ops::Range;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::geometry::InequalitySet;
use crate::metrics::{self, IterationRecord};
use crate::problems::ProblemSpec;
use crate::solvers::{SolverError, Termination};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum BaselineMethod {
    Pgda,
    Peg,
    Pogda,
    /// Lookahead on top of projected GDA.
    Pla { k: usize, alpha: f64 },
    Md,
    Mp,
}

impl BaselineMethod {
    pub fn name(&self) -> String {
        match self {
            BaselineMethod::Pgda => "pgda".into(),
            BaselineMethod::Peg => "peg".into(),
            BaselineMethod::Pogda => "pogda".into(),
            BaselineMethod::Pla { k, .. } => format!("pla{k}"),
            BaselineMethod::Md => "md".into(),
            BaselineMethod::Mp => "mp".into(),
        }
    }
}

/// `iterations` counts base steps for every method; for lookahead the
/// interpolation happens after every `k`-th projected GDA step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    #[serde(flatten)]
    pub method: BaselineMethod,
    pub gamma: f64,
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub target_rel_err: Option<f64>,
    #[serde(default)]
    pub max_wall_ms: Option<u64>,
}

impl BaselineConfig {
    pub fn new(method: BaselineMethod, gamma: f64, iterations: usize) -> Self {
        BaselineConfig {
            method,
            gamma,
            iterations,
            seed: 0,
            target_rel_err: None,
            max_wall_ms: None,
        }
    }

    pub fn validate(&self, p: &ProblemSpec) -> Result<(), SolverError> {
        let invalid = |field: &'static str, reason: String| Err(SolverError::InvalidConfig { field, reason });
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return invalid("gamma", format!("must be positive and finite, got {}", self.gamma));
        }
        if let BaselineMethod::Pla { k, alpha } = self.method {
            if k == 0 {
                return invalid("k", "must be at least 1".into());
            }
            if !(0.0..=1.0).contains(&alpha) {
                return invalid("alpha", format!("must lie in [0, 1], got {alpha}"));
            }
        }
        match (p.feasible_set(), &self.method) {
            (None, _) => invalid("method", format!("problem `{}` has no projectable feasible set", p.name())),
            (Some(InequalitySet::Simplex { .. }), _) => Ok(()),
            (Some(_), BaselineMethod::Md | BaselineMethod::Mp) => {
                invalid("method", "mirror methods need a simplex-block feasible set".into())
            }
            (Some(InequalitySet::Smooth(_)), _) => invalid("method", "smooth sets cannot be projected".into()),
            _ => Ok(()),
        }
    }
}

fn project(set: &InequalitySet, x: &DVector<f64>) -> Result<DVector<f64>, SolverError> {
    Ok(set.project(x)?)
}

/// `Π(x − γF(x))`
pub fn pgda_step(p: &ProblemSpec, set: &InequalitySet, x: &DVector<f64>, gamma: f64) -> Result<DVector<f64>, SolverError> {
    project(set, &(x - p.operator().apply(x) * gamma))
}

/// `x̃ = Π(x − γF(x))`, `x′ = Π(x − γF(x̃))`
pub fn peg_step(p: &ProblemSpec, set: &InequalitySet, x: &DVector<f64>, gamma: f64) -> Result<DVector<f64>, SolverError> {
    let lookahead = pgda_step(p, set, x, gamma)?;
    project(set, &(x - p.operator().apply(&lookahead) * gamma))
}

/// `Π(x − 2γF(x) + γF(x_prev))`
pub fn pogda_step(
    p: &ProblemSpec,
    set: &InequalitySet,
    x: &DVector<f64>,
    x_prev: &DVector<f64>,
    gamma: f64,
) -> Result<DVector<f64>, SolverError> {
    let op = p.operator();
    project(set, &(x - op.apply(x) * (2.0 * gamma) + op.apply(x_prev) * gamma))
}

/// One lookahead macro-step: `k` projected GDA steps, then
/// `Π(x + α(x̃ − x))`.
pub fn pla_step(
    p: &ProblemSpec,
    set: &InequalitySet,
    x: &DVector<f64>,
    gamma: f64,
    k: usize,
    alpha: f64,
) -> Result<DVector<f64>, SolverError> {
    let mut fast = x.clone();
    for _ in 0..k {
        fast = pgda_step(p, set, &fast, gamma)?;
    }
    project(set, &(x + (fast - x) * alpha))
}

/// Entropic prox per block: `x′ᵢ ∝ xᵢ e^{−γgᵢ}`, evaluated in the log domain.
pub fn md_step(x: &DVector<f64>, g: &DVector<f64>, gamma: f64, blocks: &[Range<usize>]) -> Result<DVector<f64>, SolverError> {
    let mut out = x.clone();
    for r in blocks {
        let logw: Vec<f64> = r.clone().map(|i| x[i].ln() - gamma * g[i]).collect();
        let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(SolverError::NonFiniteIterate { stage: "mirror" });
        }
        let w: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = w.iter().sum();
        for (i, wi) in r.clone().zip(w) {
            out[i] = wi / total;
        }
    }
    Ok(out)
}

/// Mirror prox: prox at `x` with `F(x)`, then prox at `x` with the
/// extrapolated `F(x̃)`.
pub fn mp_step(p: &ProblemSpec, x: &DVector<f64>, gamma: f64, blocks: &[Range<usize>]) -> Result<DVector<f64>, SolverError> {
    let lookahead = md_step(x, &p.operator().apply(x), gamma, blocks)?;
    md_step(x, &p.operator().apply(&lookahead), gamma, blocks)
}

#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub method: BaselineMethod,
    pub records: Vec<IterationRecord>,
    pub final_x: DVector<f64>,
    pub termination: Termination,
    pub wall_ms: f64,
}

impl BaselineRun {
    pub fn iterations_to(&self, target: f64) -> Option<usize> {
        self.records
            .iter()
            .position(|r| r.rel_err.is_some_and(|e| e <= target))
            .map(|i| i + 1)
    }
}

/// Run from the problem's initial point (projected onto the feasible set).
pub fn run_baseline(p: &ProblemSpec, cfg: &BaselineConfig) -> Result<BaselineRun, SolverError> {
    cfg.validate(p)?;
    let set = p.feasible_set().expect("validated");
    let x0 = match (set, cfg.method) {
        // mirror steps keep the support of the start point
        (_, BaselineMethod::Md | BaselineMethod::Mp) => p.initial_point(cfg.seed),
        _ => project(set, &p.initial_point(cfg.seed))?,
    };
    run_baseline_from(p, cfg, x0)
}

pub fn run_baseline_from(p: &ProblemSpec, cfg: &BaselineConfig, x0: DVector<f64>) -> Result<BaselineRun, SolverError> {
    cfg.validate(p)?;
    let set = p.feasible_set().expect("validated");
    let blocks: &[Range<usize>] = match set {
        InequalitySet::Simplex { blocks } => blocks,
        _ => &[],
    };
    let start = Instant::now();
    let elapsed = || start.elapsed().as_secs_f64() * 1e3;
    let gamma = cfg.gamma;
    let mut x = x0;
    let mut x_prev = x.clone();
    // lookahead anchor; one iteration is one base GDA step
    let mut slow = x.clone();
    let mut records = Vec::with_capacity(cfg.iterations);
    let mut termination = Termination::Completed;
    for k in 0..cfg.iterations {
        let next = match cfg.method {
            BaselineMethod::Pgda => pgda_step(p, set, &x, gamma)?,
            BaselineMethod::Peg => peg_step(p, set, &x, gamma)?,
            BaselineMethod::Pogda => pogda_step(p, set, &x, &x_prev, gamma)?,
            BaselineMethod::Pla { k: period, alpha } => {
                let fast = pgda_step(p, set, &x, gamma)?;
                if (k + 1) % period == 0 {
                    slow = project(set, &(&slow + (fast - &slow) * alpha))?;
                    slow.clone()
                } else {
                    fast
                }
            }
            BaselineMethod::Md => md_step(&x, &p.operator().apply(&x), gamma, blocks)?,
            BaselineMethod::Mp => mp_step(p, &x, gamma, blocks)?,
        };
        if next.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFiniteIterate { stage: "baseline" });
        }
        x_prev = std::mem::replace(&mut x, next);
        let f = p.operator().apply(&x);
        let rel_err = p.known_solution().map(|xs| metrics::relative_error(&x, xs));
        records.push(IterationRecord {
            t: 0,
            k,
            mu: 0.0,
            gap: metrics::gap_from_value(set, &f, &x).ok(),
            rel_err,
            feas: 0.0,
            nat_res: metrics::natural_residual_with(set, &f, &x).ok(),
            sigma: 0.0,
            eps_surr: 0.0,
            lyapunov: 0.0,
            elapsed_ms: elapsed(),
        });
        if let (Some(target), Some(e)) = (cfg.target_rel_err, rel_err) {
            if e <= target {
                termination = Termination::Tolerance;
                break;
            }
        }
        if cfg.max_wall_ms.is_some_and(|ms| elapsed() >= ms as f64) {
            termination = Termination::Budget;
            break;
        }
    }
    Ok(BaselineRun {
        method: cfg.method,
        records,
        final_x: x,
        termination,
        wall_ms: elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_2d_bg, Operator};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn gda_hand_trace() {
        let p = make_2d_bg();
        let set = p.feasible_set().unwrap();
        let x = pgda_step(&p, set, &v(&[2.4, 2.4]), 0.1).unwrap();
        assert!((x - v(&[2.16, 2.4])).amax() < 1e-15);
    }

    #[test]
    fn eg_hand_trace() {
        let p = make_2d_bg();
        let set = p.feasible_set().unwrap();
        let x = peg_step(&p, set, &v(&[1.0, 0.0]), 0.5).unwrap();
        assert!((x - v(&[0.75, 0.5])).amax() < 1e-15);
    }

    #[test]
    fn ogda_with_equal_history_is_gda() {
        let p = make_2d_bg();
        let set = p.feasible_set().unwrap();
        let x = v(&[0.3, 1.7]);
        let diff = pogda_step(&p, set, &x, &x, 0.2).unwrap() - pgda_step(&p, set, &x, 0.2).unwrap();
        assert!(diff.amax() < 1e-15);
    }

    #[test]
    fn zero_operator_fixed_points() {
        let p = ProblemSpec::builder("zero", 2, Operator::zero(2))
            .inequality(InequalitySet::uniform_box(2, 0.0, 1.0).unwrap())
            .build()
            .unwrap();
        let set = p.feasible_set().unwrap();
        let x = v(&[0.2, 0.9]);
        assert_eq!(pgda_step(&p, set, &x, 1.0).unwrap(), x);
        assert_eq!(peg_step(&p, set, &x, 1.0).unwrap(), x);
        assert_eq!(pogda_step(&p, set, &x, &x, 1.0).unwrap(), x);
        assert_eq!(pla_step(&p, set, &x, 1.0, 3, 0.5).unwrap(), x);
    }

    #[test]
    fn lookahead_endpoints() {
        let p = make_2d_bg();
        let set = p.feasible_set().unwrap();
        let x = v(&[1.0, 0.5]);
        assert_eq!(pla_step(&p, set, &x, 0.1, 4, 0.0).unwrap(), x);
        let mut gda = x.clone();
        for _ in 0..4 {
            gda = pgda_step(&p, set, &gda, 0.1).unwrap();
        }
        assert!((pla_step(&p, set, &x, 0.1, 4, 1.0).unwrap() - gda).amax() < 1e-15);
    }

    #[test]
    fn mirror_prox_weights() {
        let blocks = [0..2];
        let x = v(&[0.5, 0.5]);
        let out = md_step(&x, &v(&[2f64.ln(), 0.0]), 1.0, &blocks).unwrap();
        assert!((out - v(&[1.0 / 3.0, 2.0 / 3.0])).amax() < 1e-15);
        assert_eq!(md_step(&x, &v(&[0.0, 0.0]), 1.0, &blocks).unwrap(), x);
        let dead = md_step(&v(&[0.0, 0.0]), &v(&[0.0, 0.0]), 1.0, &blocks);
        assert!(matches!(dead, Err(SolverError::NonFiniteIterate { .. })));
    }
}
