//! Executable invariant suite behind the `verify` subcommand.
//!
//! Every check compares a fast path against an oracle or a structural
//! invariant and reports a single pass/fail line.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::barriers::{barrier_grad, barrier_value, BarrierKind, YObjective};
use crate::geometry::{project_greedy, project_simplex, EqualityGeometry, InequalitySet};
use crate::metrics::{gap, gap_from_value, natural_residual};
use crate::oracle::{finite_diff_grad, oracle_gap_vertices, oracle_project};
use crate::problems::{linspace_alpha, make_2d_bg, make_hbg, make_hbg_v2, ProblemSpec};
use crate::solvers::{run, run_from, Algorithm, InitialState, RunConfig, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        CheckResult {
            name,
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Perturb every projector before the geometry checks (fault injection).
    pub corrupt_projector: bool,
}

pub fn run_suite(opts: &VerifyOptions) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    vec![
        check_projector(&mut rng, opts.corrupt_projector),
        check_simplex_projection(&mut rng),
        check_box_projection(&mut rng),
        check_greedy_projection(&mut rng),
        check_barrier_junction(),
        check_barrier_ordering(),
        check_objective_gradient(&mut rng),
        check_gap_vertices(&mut rng),
        check_known_solutions(),
        check_multiplier_ledger(),
        check_lyapunov(),
        check_feasibility_rate(),
    ]
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| uniform(rng, -scale, scale))
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| uniform(rng, -1.0, 1.0))
}

/// Largest of `‖P² − P‖_F`, `‖P − Pᵀ‖_F`, `‖PCᵀ‖_F` and the affine residual
/// of `P x + dc` for a random `x`.
pub fn projector_defect(geom: &EqualityGeometry, x: &DVector<f64>) -> f64 {
    let pc = geom.pc();
    let idem = (pc * pc - pc).norm();
    let sym = (pc - pc.transpose()).norm();
    let annihilate = (pc * geom.c().transpose()).norm();
    let affine = if geom.rows() > 0 {
        (geom.c() * (pc * x + geom.dc()) - geom.d()).amax()
    } else {
        0.0
    };
    idem.max(sym).max(annihilate).max(affine)
}

fn check_projector(rng: &mut ChaCha8Rng, corrupt: bool) -> CheckResult {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=12);
        let p = rng.random_range(0..n);
        let c = random_matrix(rng, p, n);
        let d = random_vector(rng, p, 1.0);
        let Ok(mut geom) = EqualityGeometry::new(c, d) else {
            continue;
        };
        if corrupt {
            geom.corrupt_projector_for_testing(1e-3);
        }
        let x = random_vector(rng, n, 2.0);
        worst = worst.max(projector_defect(&geom, &x));
        cases += 1;
    }
    let hbg = make_hbg(500, 0.05).expect("valid");
    let mut geom = hbg.geometry().clone();
    if corrupt {
        geom.corrupt_projector_for_testing(1e-3);
    }
    let x = random_vector(rng, 1000, 1.0);
    worst = worst.max(projector_defect(&geom, &x));
    CheckResult::new(
        "projector idempotent, symmetric, annihilates rows",
        worst <= 1e-10,
        format!("{cases} random instances + HBG blocks, worst defect {worst:.3e}"),
    )
}

fn check_simplex_projection(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let k = rng.random_range(2..=10);
        let x = random_vector(rng, k, 2.0);
        let fast = DVector::from_vec(project_simplex(x.as_slice()));
        let set = InequalitySet::simplex(vec![0..k]).expect("valid");
        match oracle_project(&set, None, &x, 1e-12) {
            Ok(slow) => worst = worst.max((fast - slow).amax()),
            Err(e) => return CheckResult::new("simplex projection matches oracle", false, e.to_string()),
        }
    }
    CheckResult::new(
        "simplex projection matches oracle",
        worst <= 1e-6,
        format!("200 points, worst deviation {worst:.3e}"),
    )
}

fn check_box_projection(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=8);
        let lo = random_vector(rng, n, 1.0);
        let hi = lo.map(|l| l + 0.1 + rng.random::<f64>());
        let set = InequalitySet::boxed(lo, hi).expect("valid");
        let x = random_vector(rng, n, 3.0);
        let fast = set.project(&x).expect("box projects");
        let slow = oracle_project(&set, None, &x, 1e-12).expect("box oracle");
        worst = worst.max((fast - slow).amax());
    }
    CheckResult::new(
        "box projection matches oracle",
        worst <= 1e-6,
        format!("200 points, worst deviation {worst:.3e}"),
    )
}

fn check_greedy_projection(rng: &mut ChaCha8Rng) -> CheckResult {
    let eps = 1e-8;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=6);
        let m = rng.random_range(1..=6);
        let a = random_matrix(rng, m, n);
        // an interior anchor keeps the polyhedron nonempty
        let z = random_vector(rng, n, 1.0);
        let b = &a * &z + DVector::from_fn(m, |_, _| 0.1 + rng.random::<f64>());
        let x = random_vector(rng, n, 4.0);
        match project_greedy(&a, &b, &x, eps, Some(1_000_000)) {
            Ok(out) => {
                let v = (0..m)
                    .map(|j| (a.row(j).dot(&out.transpose()) - b[j]) / a.row(j).norm())
                    .fold(0.0, f64::max);
                worst = worst.max(v);
            }
            Err(e) => return CheckResult::new("greedy projection terminates feasible", false, e.to_string()),
        }
    }
    CheckResult::new(
        "greedy projection terminates feasible",
        worst < eps,
        format!("100 systems, worst normalized violation {worst:.3e}"),
    )
}

fn check_barrier_junction() -> CheckResult {
    let mut worst = 0.0f64;
    for &(mu, c) in &[(1.0, 1.0), (0.5, 0.2), (3.0, 0.0), (0.1, 0.5), (2.0, 10.0)] {
        let kind = BarrierKind::Extended { c };
        let z0 = -(-c / mu).exp();
        let std = BarrierKind::Standard;
        let left = barrier_value(std, z0, mu).expect("z0 < 0");
        let right = mu * (c / mu).exp() * z0 + mu + c;
        let dl = barrier_grad(std, z0, mu).expect("z0 < 0");
        let dr = barrier_grad(kind, z0.next_up(), mu).expect("extended is total");
        worst = worst
            .max((left - right).abs())
            .max((left - c).abs())
            .max(((dl - dr) / dr.abs().max(1.0)).abs());
    }
    CheckResult::new(
        "extended barrier continuous and C¹ at the junction",
        worst <= 1e-12,
        format!("worst mismatch {worst:.3e}"),
    )
}

fn check_barrier_ordering() -> CheckResult {
    let mut worst = f64::NEG_INFINITY;
    for &(mu, c) in &[(1.0, 1.0), (0.5, 0.2), (3.0, 0.0), (0.1, 0.5)] {
        let ext = BarrierKind::Extended { c };
        for i in 0..200 {
            let z = -(10f64).powf(-6.0 + 8.0 * i as f64 / 199.0);
            let d = barrier_value(ext, z, mu).expect("total") - barrier_value(BarrierKind::Standard, z, mu).expect("z < 0");
            worst = worst.max(d);
        }
    }
    CheckResult::new(
        "extended barrier never exceeds the standard one",
        worst <= 1e-12,
        format!("max(℘2 − ℘1) on a log grid = {worst:.3e}"),
    )
}

fn check_objective_gradient(rng: &mut ChaCha8Rng) -> CheckResult {
    let set = InequalitySet::uniform_box(2, -0.4, 2.4).expect("valid");
    let mut worst = 0.0f64;
    for i in 0..100 {
        let anchor = random_vector(rng, 2, 2.0);
        let y = DVector::from_fn(2, |_, _| uniform(rng, -0.3, 2.3));
        let barrier = if i % 2 == 0 {
            BarrierKind::Standard
        } else {
            BarrierKind::Extended { c: 1.0 }
        };
        let obj = YObjective::new(barrier, uniform(rng, 0.1, 3.0), 0.5, &anchor, &set).expect("valid");
        let (_, g) = obj.eval(&y).expect("interior");
        let fd = finite_diff_grad(|z| obj.eval(z).map(|r| r.0).unwrap_or(f64::NAN), &y, 1e-6);
        worst = worst.max((g - fd).amax());
    }
    CheckResult::new(
        "barrier objective gradient matches finite differences",
        worst <= 1e-5,
        format!("100 interior points, worst deviation {worst:.3e}"),
    )
}

fn check_gap_vertices(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=12);
        let lo = random_vector(rng, n, 1.0);
        let hi = lo.map(|l| l + 0.1 + rng.random::<f64>());
        let set = InequalitySet::boxed(lo.clone(), hi.clone()).expect("valid");
        let x = DVector::from_fn(n, |i, _| uniform(rng, lo[i], hi[i]));
        let f = random_vector(rng, n, 2.0);
        let closed = gap_from_value(&set, &f, &x).expect("compact");
        let enumerated = oracle_gap_vertices(&lo, &hi, &f, &x).expect("small");
        worst = worst.max((closed - enumerated).abs());
    }
    CheckResult::new(
        "closed-form gap matches vertex enumeration",
        worst <= 1e-12,
        format!("100 boxes with n ≤ 12, worst deviation {worst:.3e}"),
    )
}

fn check_known_solutions() -> CheckResult {
    let problems = [
        make_2d_bg(),
        make_hbg(500, 0.05).expect("valid"),
        make_hbg_v2(&linspace_alpha(500, 10.0)).expect("valid"),
    ];
    let mut worst = 0.0f64;
    for p in &problems {
        let xs = p.known_solution().expect("declared");
        let g = gap(p, xs).expect("compact").abs();
        let r = natural_residual(p, xs).expect("projectable");
        worst = worst.max(g).max(r);
    }
    CheckResult::new(
        "known solutions have zero gap and natural residual",
        worst < 1e-9,
        format!("2d-bg, hbg, hbg-v2: worst {worst:.3e}"),
    )
}

fn exact_acvi_2d() -> RunConfig {
    let mut cfg = RunConfig::new(Algorithm::Acvi, 0.5);
    cfg.mu_init = 3.0;
    cfg.delta = 0.5;
    cfg.outer_iters = 20;
    cfg.inner_iters = 20;
    cfg.mu_floor_ratio = None;
    cfg.record_iterates = true;
    cfg
}

fn exact_acvi_hbg() -> (ProblemSpec, RunConfig) {
    let p = make_hbg(20, 0.05).expect("valid");
    let mut cfg = RunConfig::new(Algorithm::Acvi, 0.5);
    cfg.mu_init = 1e-2;
    cfg.delta = 0.5;
    cfg.outer_iters = 10;
    cfg.inner_iters = 20;
    (p, cfg)
}

/// Largest increase of the Lyapunov quantity between consecutive inner
/// steps that share an outer index.
pub fn worst_lyapunov_increase(traj: &Trajectory) -> f64 {
    traj.records
        .windows(2)
        .filter(|w| w[0].t == w[1].t)
        .map(|w| w[1].lyapunov - w[0].lyapunov)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn check_multiplier_ledger() -> CheckResult {
    let p = make_2d_bg();
    let cfg = exact_acvi_2d();
    let traj = match run(&p, &cfg) {
        Ok(t) => t,
        Err(e) => return CheckResult::new("multiplier update ledger", false, e.to_string()),
    };
    let mut prev = DVector::zeros(2);
    let mut worst = 0.0f64;
    for it in &traj.iterates {
        let step = (&it.x - &it.y) * cfg.beta;
        let err = (&it.lambda - &prev - step).amax() / it.lambda.amax().max(1.0);
        worst = worst.max(err);
        prev = it.lambda.clone();
    }
    CheckResult::new(
        "multiplier update ledger",
        worst <= 1e-15,
        format!("{} steps, worst rounding {worst:.3e}", traj.iterates.len()),
    )
}

fn check_lyapunov() -> CheckResult {
    let two = run(&make_2d_bg(), &exact_acvi_2d());
    let (hp, hcfg) = exact_acvi_hbg();
    let hbg = run(&hp, &hcfg);
    match (two, hbg) {
        (Ok(a), Ok(b)) => {
            let (wa, wb) = (worst_lyapunov_increase(&a), worst_lyapunov_increase(&b));
            CheckResult::new(
                "Lyapunov quantity non-increasing along inner loops",
                wa <= 1e-9 && wb <= 1e-9,
                format!("worst increase 2d-bg {wa:.3e}, hbg(20) {wb:.3e}"),
            )
        }
        (Err(e), _) | (_, Err(e)) => CheckResult::new("Lyapunov quantity non-increasing along inner loops", false, e.to_string()),
    }
}

/// `‖x_{K+1} − y_{K+1}‖ ≤ √(Δ / β(K+1))` for `K < horizon`, with `λ*` taken
/// from the final multiplier of a long reference run. Returns the smallest
/// slack `bound − feas`.
pub fn feasibility_rate_slack(horizon: usize) -> Result<f64, String> {
    let p = make_2d_bg();
    let beta = 0.5;
    let mut cfg = RunConfig::new(Algorithm::Pacvi, beta);
    cfg.exact_x = true;
    cfg.inner_iters = 5000;
    let reference = run(&p, &cfg).map_err(|e| e.to_string())?;
    let lambda_star = reference.final_state.lambda.clone();
    let y_star = p.known_solution().expect("declared").clone();

    let init = InitialState::at(p.initial_point(0));
    let delta = (&init.lambda - &lambda_star).norm_squared() / beta + beta * (&init.y - &y_star).norm_squared();
    cfg.inner_iters = horizon;
    let traj = run_from(&p, &cfg, init).map_err(|e| e.to_string())?;
    Ok(traj
        .records
        .iter()
        .enumerate()
        .map(|(k, r)| (delta / (beta * (k as f64 + 1.0))).sqrt() - r.feas)
        .fold(f64::INFINITY, f64::min))
}

fn check_feasibility_rate() -> CheckResult {
    match feasibility_rate_slack(201) {
        Ok(slack) => CheckResult::new(
            "projection variant meets the feasibility rate",
            slack >= 0.0,
            format!("K ≤ 200 on 2d-bg, smallest slack {slack:.3e} (λ* from a reference run)"),
        ),
        Err(e) => CheckResult::new("projection variant meets the feasibility rate", false, e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        for check in run_suite(&VerifyOptions::default()) {
            assert!(check.passed, "{}: {}", check.name, check.detail);
        }
    }

    #[test]
    fn corrupted_projector_is_caught() {
        let opts = VerifyOptions {
            corrupt_projector: true,
            ..Default::default()
        };
        let results = run_suite(&opts);
        assert!(!results[0].passed);
        assert!(results[1..].iter().all(|c| c.passed));
    }
}
