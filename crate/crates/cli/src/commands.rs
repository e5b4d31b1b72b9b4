use std::collections::HashSet;
use std::path::{Path, PathBuf};

use log::{debug, info, warn};
use rayon::prelude::*;

use viforge::verify::{run_suite, VerifyOptions};
use viforge::{run, run_baseline, BaselineConfig, IterationRecord, ProblemSpec, RunConfig, SolverError, Termination};

use crate::config::{self, ConfigError, ExperimentConfig, SweepPoint};
use crate::output::{self, RunSummary, Summary, SweepRow};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERIFY_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;
pub const EXIT_SOLVER: u8 = 4;

#[derive(Debug, Clone, Default)]
pub struct GlobalOptions {
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Failure of a command, mapped onto an exit code by `main`.
#[derive(Debug)]
pub enum CommandError {
    Config(String),
    Io(String),
    Solver(String),
}

impl From<ConfigError> for CommandError {
    fn from(e: ConfigError) -> Self {
        CommandError::Config(e.0)
    }
}

impl From<std::io::Error> for CommandError {
    fn from(e: std::io::Error) -> Self {
        CommandError::Io(e.to_string())
    }
}

fn load(path: &Path, opts: &GlobalOptions) -> Result<(serde_json::Value, ExperimentConfig), CommandError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CommandError::Config(format!("cannot read {}: {e}", path.display())))?;
    let (raw, mut cfg) = config::parse(&text)?;
    if let Some(seed) = opts.seed.or(cfg.seed) {
        cfg.apply_seed(seed);
    }
    if let Some(dir) = &opts.out {
        cfg.output.dir = dir.clone();
    }
    if !cfg.has_methods() {
        return Err(CommandError::Config("config needs a `solver` block or a non-empty `baselines` list".into()));
    }
    Ok((raw, cfg))
}

/// Config-level validation of every method against the problem.
fn validate(p: &ProblemSpec, cfg: &ExperimentConfig) -> Result<(), ConfigError> {
    let describe = |block: &str, e: SolverError| ConfigError::new(format!("`{block}`: {e}"));
    if let Some(s) = &cfg.solver {
        s.validate(p).map_err(|e| describe("solver", e))?;
    }
    for (i, b) in cfg.baselines.iter().enumerate() {
        b.validate(p).map_err(|e| describe(&format!("baselines.{i}"), e))?;
    }
    Ok(())
}

/// One method of an experiment, with a file-safe unique label.
enum Method<'a> {
    Solver(&'a RunConfig),
    Baseline(&'a BaselineConfig),
}

fn methods(cfg: &ExperimentConfig) -> Vec<(String, Method<'_>)> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut push = |name: String, m| {
        let mut label = name.clone();
        let mut n = 1;
        while !seen.insert(label.clone()) {
            n += 1;
            label = format!("{name}_{n}");
        }
        out.push((label, m));
    };
    if let Some(s) = &cfg.solver {
        push(s.algorithm.name().to_string(), Method::Solver(s));
    }
    for b in &cfg.baselines {
        push(b.method.name(), Method::Baseline(b));
    }
    out
}

fn untimed(r: &IterationRecord, timing: bool) -> IterationRecord {
    IterationRecord {
        elapsed_ms: if timing { r.elapsed_ms } else { 0.0 },
        ..r.clone()
    }
}

/// Run one method and write its trajectory CSV.
fn execute(p: &ProblemSpec, method: &Method<'_>, csv_path: &Path, timing: bool) -> Result<RunSummary, CommandError> {
    let trajectory = csv_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let summary = match method {
        Method::Solver(cfg) => {
            let traj = run(p, cfg).map_err(|e| CommandError::Solver(e.to_string()))?;
            output::atomic_write(csv_path, &output::trajectory_csv(&traj.records, timing)?)?;
            RunSummary {
                method: cfg.algorithm.name().to_string(),
                seed: cfg.seed,
                termination: traj.termination,
                iterations: traj.iterations(),
                target_rel_err: cfg.target_rel_err,
                iterations_to_target: cfg.target_rel_err.and_then(|t| traj.iterations_to(t)),
                final_record: traj.last().map(|r| untimed(r, timing)),
                final_x: traj.final_state.x.iter().copied().collect(),
                wall_ms: if timing { traj.wall_ms } else { 0.0 },
                trajectory,
            }
        }
        Method::Baseline(cfg) => {
            let r = run_baseline(p, cfg).map_err(|e| CommandError::Solver(e.to_string()))?;
            output::atomic_write(csv_path, &output::trajectory_csv(&r.records, timing)?)?;
            RunSummary {
                method: cfg.method.name(),
                seed: cfg.seed,
                termination: r.termination,
                iterations: r.records.len(),
                target_rel_err: cfg.target_rel_err,
                iterations_to_target: cfg.target_rel_err.and_then(|t| r.iterations_to(t)),
                final_record: r.records.last().map(|r| untimed(r, timing)),
                final_x: r.final_x.iter().copied().collect(),
                wall_ms: if timing { r.wall_ms } else { 0.0 },
                trajectory,
            }
        }
    };
    Ok(summary)
}

pub fn solve(path: &Path, opts: &GlobalOptions) -> Result<u8, CommandError> {
    let (_, cfg) = load(path, opts)?;
    let p = cfg.problem.build()?;
    validate(&p, &cfg)?;
    let out = &cfg.output;
    let mut runs = Vec::new();
    let mut code = EXIT_OK;
    for (label, method) in methods(&cfg) {
        let csv_path = out.dir.join(format!("{}{label}.csv", out.prefix));
        info!("solve: {label} on {} (dim {})", p.name(), p.dim());
        match execute(&p, &method, &csv_path, out.timing) {
            Ok(s) => {
                let last = s.final_record.as_ref();
                println!(
                    "{label}: {} after {} iterations, rel_err {}, gap {}",
                    output::termination_name(s.termination),
                    s.iterations,
                    last.and_then(|r| r.rel_err).map_or("n/a".into(), |v| format!("{v:.3e}")),
                    last.and_then(|r| r.gap).map_or("n/a".into(), |v| format!("{v:.3e}")),
                );
                if s.termination == Termination::Diverged && code == EXIT_OK {
                    code = EXIT_DIVERGED;
                }
                runs.push(s);
            }
            Err(CommandError::Solver(msg)) => {
                eprintln!("error: {label}: {msg}");
                code = EXIT_SOLVER;
            }
            Err(e) => return Err(e),
        }
    }
    let summary = Summary {
        problem: p.name().to_string(),
        dim: p.dim(),
        runs,
    };
    let summary_path = out.dir.join(format!("{}summary.json", out.prefix));
    output::atomic_write(&summary_path, &output::summary_json(&summary)?)?;
    debug!("wrote {}", summary_path.display());
    Ok(code)
}

fn sweep_point(point: &SweepPoint, sweep: &config::SweepConfig, paths: &[String]) -> Vec<SweepRow> {
    let mut cfg = point.config.clone();
    let seed = cfg.seed.unwrap_or(0);
    if let Some(s) = &mut cfg.solver {
        if let Some(b) = sweep.budget {
            s.max_iters = Some(b);
        }
        if sweep.target_rel_err.is_some() {
            s.target_rel_err = sweep.target_rel_err;
        }
    }
    for b in &mut cfg.baselines {
        if let Some(budget) = sweep.budget {
            b.iterations = budget;
        }
        if sweep.target_rel_err.is_some() {
            b.target_rel_err = sweep.target_rel_err;
        }
    }
    let assignment: Vec<String> = point.assignment.iter().map(|v| v.to_string()).collect();
    let row = |method: String, outcome| SweepRow {
        point: point.index,
        seed,
        assignment: assignment.clone(),
        method,
        budget: sweep.budget,
        target_rel_err: sweep.target_rel_err,
        outcome,
    };
    let labels: Vec<String> = methods(&cfg).into_iter().map(|(l, _)| l).collect();
    let problem = cfg.problem.build().and_then(|p| validate(&p, &cfg).map(|_| p));
    let p = match problem {
        Ok(p) => p,
        Err(e) => return labels.into_iter().map(|l| row(l, Err(e.0.clone()))).collect(),
    };
    let out = &cfg.output;
    methods(&cfg)
        .into_iter()
        .map(|(label, method)| {
            let csv_path = out.dir.join(format!("{}p{:04}_{label}.csv", out.prefix, point.index));
            let outcome = execute(&p, &method, &csv_path, out.timing).map_err(|e| match e {
                CommandError::Config(m) | CommandError::Io(m) | CommandError::Solver(m) => m,
            });
            if let Err(msg) = &outcome {
                warn!("sweep point {} ({label}, {}): {msg}", point.index, paths.join(","));
            }
            row(label, outcome)
        })
        .collect()
}

pub fn sweep(path: &Path, opts: &GlobalOptions) -> Result<u8, CommandError> {
    let (raw, cfg) = load(path, opts)?;
    let sweep = cfg
        .sweep
        .clone()
        .ok_or_else(|| CommandError::Config("`sweep` block is missing".into()))?;
    let mut points = config::expand_sweep(&raw, &sweep)?;
    let base = cfg.seed.unwrap_or_else(|| cfg.solver.as_ref().map_or(0, |s| s.seed));
    for point in &mut points {
        point.config.apply_seed(base.wrapping_add(sweep.seed_stride.wrapping_mul(point.index as u64)));
        point.config.output = cfg.output.clone();
    }
    let paths: Vec<String> = sweep.parameters.iter().map(|p| p.path.clone()).collect();
    info!("sweep: {} points over {}", points.len(), paths.join(", "));

    let jobs = opts.jobs.unwrap_or(1).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CommandError::Io(e.to_string()))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        points
            .par_iter()
            .map(|pt| sweep_point(pt, &sweep, &paths))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    });
    let failures = rows.iter().filter(|r| r.outcome.is_err()).count();
    let out_path = cfg.output.dir.join(format!("{}sweep.csv", cfg.output.prefix));
    output::atomic_write(&out_path, &output::sweep_csv(&paths, &rows, cfg.output.timing)?)?;
    println!(
        "sweep: {} points, {} rows, {failures} failed; wrote {}",
        points.len(),
        rows.len(),
        out_path.display()
    );
    Ok(EXIT_OK)
}

pub fn verify(opts: &GlobalOptions, corrupt_projector: bool) -> u8 {
    let results = run_suite(&VerifyOptions {
        seed: opts.seed.unwrap_or(0),
        corrupt_projector,
    });
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in &results {
        println!("{}  {:width$}  {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    let failed: Vec<_> = results.iter().filter(|r| !r.passed).collect();
    if failed.is_empty() {
        println!("all {} checks passed", results.len());
        EXIT_OK
    } else {
        for r in &failed {
            eprintln!("failed invariant: {}", r.name);
        }
        EXIT_VERIFY_FAILED
    }
}
