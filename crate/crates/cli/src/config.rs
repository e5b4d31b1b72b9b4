//! Experiment configuration: the JSON schema and its translation into
//! library types.

use std::fmt;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use viforge::problems::{linspace_alpha, InitRule};
use viforge::{
    make_2d_bg, make_hbg, make_hbg_v2, BaselineConfig, InequalitySet, Operator, ProblemSpec, RunConfig,
};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        ConfigError(msg.into())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: Option<RunConfig>,
    #[serde(default)]
    pub baselines: Vec<BaselineConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    /// Overrides the seed of the solver and every baseline.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemConfig {
    #[serde(rename = "2d-bg")]
    TwoDimBg,
    Hbg {
        /// Strategies per player.
        k: usize,
        eta: f64,
    },
    HbgV2 {
        /// Explicit per-strategy weights; otherwise `linspace(1, alpha_max, k)`.
        #[serde(default)]
        alpha: Option<Vec<f64>>,
        #[serde(default)]
        k: Option<usize>,
        #[serde(default)]
        alpha_max: Option<f64>,
    },
    /// `F(x) = Mx + q` over `{Cx = d} ∩ inequality`.
    Affine {
        m: Vec<Vec<f64>>,
        q: Vec<f64>,
        #[serde(default)]
        equality: Option<EqualityConfig>,
        #[serde(default)]
        inequality: SetConfig,
        /// Joint feasible set for baselines and the gap, when equality rows
        /// are present.
        #[serde(default)]
        feasible_set: Option<SetConfig>,
        #[serde(default)]
        known_solution: Option<Vec<f64>>,
        #[serde(default)]
        init: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EqualityConfig {
    pub c: Vec<Vec<f64>>,
    pub d: Vec<f64>,
}

/// `null` box bounds stand for an infinite bound.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SetConfig {
    #[default]
    None,
    Box {
        lo: Vec<Option<f64>>,
        hi: Vec<Option<f64>>,
    },
    Nonnegative,
    Simplex {
        blocks: Vec<[usize; 2]>,
    },
    Halfspaces {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameters: Vec<SweepParameter>,
    #[serde(default)]
    pub target_rel_err: Option<f64>,
    /// Iteration cap applied to every run of the sweep.
    #[serde(default)]
    pub budget: Option<usize>,
    /// Point `i` runs with seed `base + i·seed_stride`; 0 pins every point
    /// to the base seed.
    #[serde(default = "default_stride")]
    pub seed_stride: u64,
}

fn default_stride() -> u64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParameter {
    /// Dotted path into the config, e.g. `problem.eta` or `baselines.0.gamma`.
    pub path: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub prefix: String,
    /// Write wall-clock columns; turn off for byte-identical reruns.
    #[serde(default = "default_timing")]
    pub timing: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from(".")
}

fn default_timing() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_dir(),
            prefix: String::new(),
            timing: default_timing(),
        }
    }
}

pub fn parse(text: &str) -> Result<(Value, ExperimentConfig), ConfigError> {
    let raw: Value = serde_json::from_str(text).map_err(|e| ConfigError::new(format!("invalid JSON: {e}")))?;
    let cfg = from_value(raw.clone())?;
    Ok((raw, cfg))
}

pub fn from_value(raw: Value) -> Result<ExperimentConfig, ConfigError> {
    serde_json::from_value(raw).map_err(|e| ConfigError::new(format!("invalid config: {e}")))
}

impl ExperimentConfig {
    /// Push the top-level seed into the solver and baseline blocks.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        if let Some(s) = &mut self.solver {
            s.seed = seed;
        }
        for b in &mut self.baselines {
            b.seed = seed;
        }
    }

    pub fn has_methods(&self) -> bool {
        self.solver.is_some() || !self.baselines.is_empty()
    }
}

fn matrix(rows: &[Vec<f64>], field: &str) -> Result<DMatrix<f64>, ConfigError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(ConfigError::new(format!("`{field}`: rows have different lengths")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn set(cfg: &SetConfig, n: usize, field: &str) -> Result<InequalitySet, ConfigError> {
    let bad = |e: viforge::geometry::GeometryError| ConfigError::new(format!("`{field}`: {e}"));
    match cfg {
        SetConfig::None => Ok(InequalitySet::Unconstrained),
        SetConfig::Nonnegative => Ok(InequalitySet::nonnegative(n)),
        SetConfig::Box { lo, hi } => {
            let lo = DVector::from_iterator(lo.len(), lo.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)));
            let hi = DVector::from_iterator(hi.len(), hi.iter().map(|v| v.unwrap_or(f64::INFINITY)));
            InequalitySet::boxed(lo, hi).map_err(bad)
        }
        SetConfig::Simplex { blocks } => InequalitySet::simplex(blocks.iter().map(|[a, b]| *a..*b).collect()).map_err(bad),
        SetConfig::Halfspaces { a, b } => {
            InequalitySet::halfspaces(matrix(a, field)?, DVector::from_vec(b.clone())).map_err(bad)
        }
    }
}

impl ProblemConfig {
    pub fn build(&self) -> Result<ProblemSpec, ConfigError> {
        let bad = |e: viforge::problems::ProblemError| ConfigError::new(format!("`problem`: {e}"));
        match self {
            ProblemConfig::TwoDimBg => Ok(make_2d_bg()),
            ProblemConfig::Hbg { k, eta } => make_hbg(*k, *eta).map_err(bad),
            ProblemConfig::HbgV2 { alpha, k, alpha_max } => {
                let alpha = match (alpha, k, alpha_max) {
                    (Some(a), None, None) => a.clone(),
                    (None, Some(k), Some(amax)) => linspace_alpha(*k, *amax),
                    _ => {
                        return Err(ConfigError::new(
                            "`problem`: hbg-v2 needs either `alpha` or both `k` and `alpha_max`",
                        ))
                    }
                };
                make_hbg_v2(&alpha).map_err(bad)
            }
            ProblemConfig::Affine {
                m,
                q,
                equality,
                inequality,
                feasible_set,
                known_solution,
                init,
            } => {
                let n = q.len();
                let m = matrix(m, "problem.m")?;
                if m.shape() != (n, n) {
                    return Err(ConfigError::new(format!("`problem.m`: expected {n}x{n}, got {:?}", m.shape())));
                }
                let mut b = ProblemSpec::builder("affine", n, Operator::affine(m, DVector::from_vec(q.clone())))
                    .inequality(set(inequality, n, "problem.inequality")?);
                if let Some(eq) = equality {
                    b = b.equality(matrix(&eq.c, "problem.equality.c")?, DVector::from_vec(eq.d.clone()));
                }
                if let Some(fs) = feasible_set {
                    b = b.feasible_set(set(fs, n, "problem.feasible_set")?);
                }
                if let Some(xs) = known_solution {
                    b = b.known_solution(DVector::from_vec(xs.clone()));
                }
                if let Some(x0) = init {
                    b = b.init(InitRule::Point(DVector::from_vec(x0.clone())));
                }
                b.build().map_err(bad)
            }
        }
    }
}

/// Set the value at a dotted path, creating missing object keys.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), ConfigError> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::new(format!("sweep path `{path}` is malformed")));
    }
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| ConfigError::new(format!("sweep path `{path}`: `{part}` is not an index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| ConfigError::new(format!("sweep path `{path}`: index {idx} out of range ({len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(ConfigError::new(format!("sweep path `{path}`: `{part}` is not inside an object"))),
        };
    }
    unreachable!("loop returns on the last segment")
}

/// One sweep point: the parameter assignment and the resulting config.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub index: usize,
    pub assignment: Vec<Value>,
    pub config: ExperimentConfig,
}

/// Cross product of the sweep values, in row-major order (last parameter
/// varies fastest). Every point is parsed up front so config errors are
/// reported before anything runs.
pub fn expand_sweep(raw: &Value, sweep: &SweepConfig) -> Result<Vec<SweepPoint>, ConfigError> {
    if sweep.parameters.is_empty() {
        return Err(ConfigError::new("`sweep.parameters` is empty"));
    }
    if let Some(p) = sweep.parameters.iter().find(|p| p.values.is_empty()) {
        return Err(ConfigError::new(format!("`sweep.parameters`: `{}` has no values", p.path)));
    }
    let total: usize = sweep.parameters.iter().map(|p| p.values.len()).product();
    let mut points = Vec::with_capacity(total);
    for index in 0..total {
        let mut rem = index;
        let mut assignment = vec![Value::Null; sweep.parameters.len()];
        for (slot, p) in sweep.parameters.iter().enumerate().rev() {
            assignment[slot] = p.values[rem % p.values.len()].clone();
            rem /= p.values.len();
        }
        let mut value = raw.clone();
        if let Value::Object(map) = &mut value {
            map.remove("sweep");
        }
        for (p, v) in sweep.parameters.iter().zip(&assignment) {
            set_path(&mut value, &p.path, v.clone())?;
        }
        let config = from_value(value).map_err(|e| ConfigError::new(format!("sweep point {index}: {}", e.0)))?;
        points.push(SweepPoint {
            index,
            assignment,
            config,
        });
    }
    Ok(points)
}
