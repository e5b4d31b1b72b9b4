use nalgebra::DVector;
use proptest::prelude::*;

use viforge::baselines::{
    pgda_step, pla_step, pogda_step, run_baseline, run_baseline_from, BaselineConfig, BaselineMethod,
};
use viforge::problems::{make_2d_bg, make_hbg, make_hbg_v2};
use viforge::solvers::SolverError;

fn on_simplex_blocks(x: &DVector<f64>, blocks: usize) -> bool {
    let n = x.len() / blocks;
    x.min() >= 0.0 && (0..blocks).all(|b| (x.rows(b * n, n).sum() - 1.0).abs() < 1e-10)
}

fn methods() -> impl Strategy<Value = BaselineMethod> {
    prop_oneof![
        Just(BaselineMethod::Pgda),
        Just(BaselineMethod::Peg),
        Just(BaselineMethod::Pogda),
        (1usize..6, 0.1..1.0f64).prop_map(|(k, alpha)| BaselineMethod::Pla { k, alpha }),
        Just(BaselineMethod::Md),
        Just(BaselineMethod::Mp),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn iterates_stay_on_the_simplex(method in methods(), seed in any::<u64>(), gamma in 0.01..0.5f64) {
        let p = make_hbg(10, 0.2).unwrap();
        let mut cfg = BaselineConfig::new(method, gamma, 30);
        cfg.seed = seed;
        let r = run_baseline(&p, &cfg).unwrap();
        prop_assert_eq!(r.records.len(), 30);
        prop_assert!(on_simplex_blocks(&r.final_x, 2));
    }

    #[test]
    fn lookahead_matches_macro_steps(k in 1usize..6, alpha in 0.1..1.0f64, macros in 1usize..8, seed in any::<u64>()) {
        let p = make_hbg(6, 0.1).unwrap();
        let set = p.feasible_set().unwrap().clone();
        let gamma = 0.2;
        let x0 = set.project(&p.initial_point(seed)).unwrap();
        let cfg = BaselineConfig::new(BaselineMethod::Pla { k, alpha }, gamma, k * macros);
        let r = run_baseline_from(&p, &cfg, x0.clone()).unwrap();
        let mut x = x0;
        for _ in 0..macros {
            x = pla_step(&p, &set, &x, gamma, k, alpha).unwrap();
        }
        prop_assert!((r.final_x - x).amax() < 1e-14);
    }
}

#[test]
fn extragradient_contracts_on_hbg_with_small_step() {
    let p = make_hbg(50, 0.05).unwrap();
    let r = run_baseline(&p, &BaselineConfig::new(BaselineMethod::Peg, 0.3, 300)).unwrap();
    let errs: Vec<f64> = r.records.iter().map(|x| x.rel_err.unwrap()).collect();
    assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    assert!(errs.last().unwrap() < &(errs[0] * 0.5));
}

#[test]
fn optimistic_first_step_is_a_gradient_step() {
    let p = make_2d_bg();
    let set = p.feasible_set().unwrap();
    let x = DVector::from_vec(vec![2.0, 2.0]);
    let diff = pogda_step(&p, set, &x, &x, 0.1).unwrap() - pgda_step(&p, set, &x, 0.1).unwrap();
    assert!(diff.amax() < 1e-15);
}

#[test]
fn simultaneous_gda_on_bilinear_game_spirals_out() {
    let p = make_hbg_v2(&[1.0, 1.0]).unwrap();
    let xs = p.known_solution().unwrap().clone();
    let x0 = DVector::from_vec(vec![0.6, 0.4, 0.45, 0.55]);
    let cfg = BaselineConfig::new(BaselineMethod::Pgda, 0.1, 200);
    let r = run_baseline_from(&p, &cfg, x0.clone()).unwrap();
    assert!((&r.final_x - &xs).norm() >= (&x0 - &xs).norm());
}

#[test]
fn mirror_methods_require_simplex_blocks() {
    let p = make_2d_bg();
    for m in [BaselineMethod::Md, BaselineMethod::Mp] {
        let err = run_baseline(&p, &BaselineConfig::new(m, 0.1, 5)).unwrap_err();
        assert!(matches!(err, SolverError::InvalidConfig { field: "method", .. }));
    }
}

#[test]
fn config_round_trips_through_json() {
    let mut cfg = BaselineConfig::new(BaselineMethod::Pla { k: 5, alpha: 0.5 }, 0.3, 50);
    cfg.target_rel_err = Some(0.02);
    let text = serde_json::to_string(&cfg).unwrap();
    let back: BaselineConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, cfg);
    let parsed: BaselineConfig = serde_json::from_str(r#"{"method": "peg", "gamma": 0.3, "iterations": 10}"#).unwrap();
    assert_eq!(parsed.method, BaselineMethod::Peg);
}
