//! Problem instances: operator, constraint description and, where known, the
//! closed-form solution.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{EqualityGeometry, GeometryError, InequalitySet};

/// Feasibility tolerance for declared solutions.
pub const SOLUTION_FEASIBILITY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("parameter `{name}` out of range: {value}")]
    ParamOutOfRange { name: &'static str, value: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("declared solution is infeasible (violation {violation:e})")]
    InfeasibleSolution { violation: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type OperatorFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;

/// `F(x) = Mx + q`.
#[derive(Debug, Clone)]
pub struct AffineMap {
    pub m: DMatrix<f64>,
    pub q: DVector<f64>,
}

/// The VI operator. Affine operators keep their dense form so that the
/// x-subproblem can be solved by a linear solve; `eval` may be a faster
/// structured evaluation of the same map.
#[derive(Clone)]
pub struct Operator {
    eval: Arc<OperatorFn>,
    affine: Option<Arc<AffineMap>>,
}

impl Operator {
    pub fn affine(m: DMatrix<f64>, q: DVector<f64>) -> Self {
        let map = Arc::new(AffineMap { m, q });
        let inner = Arc::clone(&map);
        Operator {
            eval: Arc::new(move |x| &inner.m * x + &inner.q),
            affine: Some(map),
        }
    }

    /// Affine operator with a caller-supplied evaluation of `Mx + q`.
    pub fn structured_affine<F>(m: DMatrix<f64>, q: DVector<f64>, eval: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Operator {
            eval: Arc::new(eval),
            affine: Some(Arc::new(AffineMap { m, q })),
        }
    }

    pub fn custom<F>(eval: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Operator {
            eval: Arc::new(eval),
            affine: None,
        }
    }

    pub fn zero(n: usize) -> Self {
        Self::affine(DMatrix::zeros(n, n), DVector::zeros(n))
    }

    #[inline]
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.eval)(x)
    }

    pub fn as_affine(&self) -> Option<&AffineMap> {
        self.affine.as_deref()
    }
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Operator")
            .field("affine", &self.affine.is_some())
            .finish()
    }
}

/// How a run picks its starting point when none is given.
#[derive(Debug, Clone)]
pub enum InitRule {
    Point(DVector<f64>),
    /// Uniform random entries, normalized to sum to one on each block.
    RandomSimplexBlocks(Vec<Range<usize>>),
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    name: String,
    dim: usize,
    operator: Operator,
    geometry: Arc<EqualityGeometry>,
    inequality: InequalitySet,
    feasible_set: Option<InequalitySet>,
    known_solution: Option<DVector<f64>>,
    init: InitRule,
}

pub struct ProblemBuilder {
    name: String,
    dim: usize,
    operator: Operator,
    equality: Option<(DMatrix<f64>, DVector<f64>)>,
    inequality: InequalitySet,
    feasible_set: Option<InequalitySet>,
    known_solution: Option<DVector<f64>>,
    init: Option<InitRule>,
}

impl ProblemBuilder {
    pub fn equality(mut self, c: DMatrix<f64>, d: DVector<f64>) -> Self {
        self.equality = Some((c, d));
        self
    }

    pub fn inequality(mut self, set: InequalitySet) -> Self {
        self.inequality = set;
        self
    }

    /// The joint feasible set `C`, used by projection baselines, the gap and
    /// the natural residual. Defaults to the inequality set when there are no
    /// equality rows.
    pub fn feasible_set(mut self, set: InequalitySet) -> Self {
        self.feasible_set = Some(set);
        self
    }

    pub fn known_solution(mut self, x: DVector<f64>) -> Self {
        self.known_solution = Some(x);
        self
    }

    pub fn init(mut self, rule: InitRule) -> Self {
        self.init = Some(rule);
        self
    }

    pub fn build(self) -> Result<ProblemSpec, ProblemError> {
        let n = self.dim;
        let geometry = match self.equality {
            Some((c, d)) => {
                if c.ncols() != n {
                    return Err(ProblemError::DimensionMismatch {
                        expected: n,
                        found: c.ncols(),
                    });
                }
                EqualityGeometry::new(c, d)?
            }
            None => EqualityGeometry::unconstrained(n),
        };
        let probe = self.operator.apply(&DVector::zeros(n));
        if probe.len() != n {
            return Err(ProblemError::DimensionMismatch {
                expected: n,
                found: probe.len(),
            });
        }
        let feasible_set = match self.feasible_set {
            Some(s) => Some(s),
            None if geometry.rows() == 0 => Some(self.inequality.clone()),
            None => None,
        };
        if let Some(x) = &self.known_solution {
            if x.len() != n {
                return Err(ProblemError::DimensionMismatch {
                    expected: n,
                    found: x.len(),
                });
            }
            let violation = geometry.residual(x).max(self.inequality.max_violation(x));
            if violation > SOLUTION_FEASIBILITY_TOL {
                return Err(ProblemError::InfeasibleSolution { violation });
            }
        }
        let init = self.init.unwrap_or_else(|| InitRule::Point(DVector::zeros(n)));
        Ok(ProblemSpec {
            name: self.name,
            dim: n,
            operator: self.operator,
            geometry: Arc::new(geometry),
            inequality: self.inequality,
            feasible_set,
            known_solution: self.known_solution,
            init,
        })
    }
}

impl ProblemSpec {
    pub fn builder(name: impl Into<String>, dim: usize, operator: Operator) -> ProblemBuilder {
        ProblemBuilder {
            name: name.into(),
            dim,
            operator,
            equality: None,
            inequality: InequalitySet::Unconstrained,
            feasible_set: None,
            known_solution: None,
            init: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn operator(&self) -> &Operator {
        &self.operator
    }

    pub fn geometry(&self) -> &EqualityGeometry {
        &self.geometry
    }

    pub fn inequality(&self) -> &InequalitySet {
        &self.inequality
    }

    pub fn feasible_set(&self) -> Option<&InequalitySet> {
        self.feasible_set.as_ref()
    }

    pub fn known_solution(&self) -> Option<&DVector<f64>> {
        self.known_solution.as_ref()
    }

    pub fn init_rule(&self) -> &InitRule {
        &self.init
    }

    pub fn initial_point(&self, seed: u64) -> DVector<f64> {
        match &self.init {
            InitRule::Point(x) => x.clone(),
            InitRule::RandomSimplexBlocks(blocks) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut x = DVector::from_fn(self.dim, |_, _| rng.random::<f64>());
                for r in blocks {
                    let s: f64 = x.as_slice()[r.clone()].iter().sum();
                    for v in &mut x.as_mut_slice()[r.clone()] {
                        *v /= s;
                    }
                }
                x
            }
        }
    }

    /// Replace the operator, keeping the constraint description.
    pub fn with_operator(&self, operator: Operator) -> Self {
        ProblemSpec {
            operator,
            ..self.clone()
        }
    }
}

pub fn eval_operator(p: &ProblemSpec, x: &DVector<f64>) -> Result<DVector<f64>, ProblemError> {
    if x.len() != p.dim() {
        return Err(ProblemError::DimensionMismatch {
            expected: p.dim(),
            found: x.len(),
        });
    }
    Ok(p.operator().apply(x))
}

/// `min_{x1} max_{x2} x1·x2` on `[-0.4, 2.4]²`.
pub fn make_2d_bg() -> ProblemSpec {
    let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    ProblemSpec::builder("2d-bg", 2, Operator::affine(m, DVector::zeros(2)))
        .inequality(InequalitySet::uniform_box(2, -0.4, 2.4).expect("valid box"))
        .known_solution(DVector::zeros(2))
        .init(InitRule::Point(DVector::from_element(2, 2.0)))
        .build()
        .expect("2d-bg is well formed")
}

fn block_sum_rows(k: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut c = DMatrix::zeros(2, 2 * k);
    for i in 0..k {
        c[(0, i)] = 1.0;
        c[(1, k + i)] = 1.0;
    }
    (c, DVector::from_element(2, 1.0))
}

fn two_simplex_problem(
    name: &str,
    k: usize,
    operator: Operator,
    solution: DVector<f64>,
) -> Result<ProblemSpec, ProblemError> {
    let (c, d) = block_sum_rows(k);
    let blocks = vec![0..k, k..2 * k];
    ProblemSpec::builder(name, 2 * k, operator)
        .equality(c, d)
        .inequality(InequalitySet::nonnegative(2 * k))
        .feasible_set(InequalitySet::simplex(blocks.clone())?)
        .known_solution(solution)
        .init(InitRule::RandomSimplexBlocks(blocks))
        .build()
}

/// High-dimensional bilinear game on two `k`-simplices with rotational
/// intensity `1 - η`; `F(x) = Ax` with `A = [[ηI, (1-η)I], [-(1-η)I, ηI]]`.
pub fn make_hbg(k: usize, eta: f64) -> Result<ProblemSpec, ProblemError> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(ProblemError::ParamOutOfRange {
            name: "eta",
            value: eta,
        });
    }
    if k < 2 {
        return Err(ProblemError::ParamOutOfRange {
            name: "dim_per_player",
            value: k as f64,
        });
    }
    let n = 2 * k;
    let mut a = DMatrix::zeros(n, n);
    for i in 0..k {
        a[(i, i)] = eta;
        a[(i, k + i)] = 1.0 - eta;
        a[(k + i, i)] = -(1.0 - eta);
        a[(k + i, k + i)] = eta;
    }
    let op = Operator::structured_affine(a, DVector::zeros(n), move |x| {
        DVector::from_fn(n, |i, _| {
            if i < k {
                eta * x[i] + (1.0 - eta) * x[k + i]
            } else {
                -(1.0 - eta) * x[i - k] + eta * x[i]
            }
        })
    });
    two_simplex_problem("hbg", k, op, DVector::from_element(n, 1.0 / k as f64))
}

/// Bilinear game `x1ᵀ D x2` on two simplices with `D = diag(α)`.
pub fn make_hbg_v2(alpha: &[f64]) -> Result<ProblemSpec, ProblemError> {
    let k = alpha.len();
    if k < 2 {
        return Err(ProblemError::ParamOutOfRange {
            name: "dim_per_player",
            value: k as f64,
        });
    }
    if let Some(&bad) = alpha.iter().find(|&&a| !(a > 0.0 && a.is_finite())) {
        return Err(ProblemError::ParamOutOfRange {
            name: "alpha",
            value: bad,
        });
    }
    let n = 2 * k;
    let mut m = DMatrix::zeros(n, n);
    for (i, &a) in alpha.iter().enumerate() {
        m[(i, k + i)] = a;
        m[(k + i, i)] = -a;
    }
    let d: Vec<f64> = alpha.to_vec();
    let op = Operator::structured_affine(m, DVector::zeros(n), move |x| {
        DVector::from_fn(n, |i, _| if i < k { d[i] * x[k + i] } else { -d[i - k] * x[i - k] })
    });
    let inv_sum: f64 = alpha.iter().map(|a| 1.0 / a).sum();
    let block: Vec<f64> = alpha.iter().map(|a| 1.0 / (a * inv_sum)).collect();
    let solution = DVector::from_iterator(n, block.iter().chain(block.iter()).copied());
    two_simplex_problem("hbg-v2", k, op, solution)
}

/// `α_i` evenly spaced on `[1, α_max]`.
pub fn linspace_alpha(k: usize, alpha_max: f64) -> Vec<f64> {
    if k == 1 {
        return vec![1.0];
    }
    (0..k)
        .map(|i| 1.0 + (alpha_max - 1.0) * i as f64 / (k - 1) as f64)
        .collect()
}

/// Conditioning `κ = α_min / α_max`.
pub fn conditioning(alpha: &[f64]) -> f64 {
    let min = alpha.iter().copied().fold(f64::INFINITY, f64::min);
    let max = alpha.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    min / max
}
