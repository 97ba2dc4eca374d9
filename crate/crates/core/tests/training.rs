//! End-to-end training runs on the synthetic tasks.

use qlab::trainer::{
    make_cold_task, make_warm_task, task_for_config, train, Method, RunStatus, Scenario,
    TrainConfig,
};

fn warm_grpo(seed: u64, steps: usize) -> TrainConfig {
    let mut cfg = TrainConfig::cold(0.0, seed);
    cfg.method = Method::Grpo;
    cfg.scenario = Scenario::Warm;
    cfg.lr = 2.0;
    cfg.steps = steps;
    cfg
}

#[test]
fn warm_start_improves_the_mean_marginal() {
    let task = make_warm_task(0.3, 4).unwrap();
    let out = train(&warm_grpo(4, 60), &task).unwrap();
    let m: Vec<f64> = out.trace.rows.iter().map(|r| r.mean_marginal).collect();
    assert_eq!(out.trace.status, RunStatus::Completed);
    assert!(m.last().unwrap() > &(m[0] + 0.05), "{m:?}");
    // sampling noise allows small dips, never a sustained fall
    let worst = m.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
    assert!(worst < 0.02, "largest dip {worst}");
}

#[test]
fn cold_start_escapes_at_q1_but_not_at_q0() {
    let task = make_cold_task(1e-3, 7).unwrap();
    let budget = 150;
    let run = |q: f64| {
        let mut cfg = TrainConfig::cold(q, 7);
        cfg.steps = budget;
        train(&cfg, &task).unwrap().trace
    };
    let hot = run(1.0);
    let flat = run(0.0);
    assert!(
        hot.escape_step().is_some(),
        "q = 1 final marginal {}",
        hot.final_marginal()
    );
    assert_eq!(
        flat.escape_step(),
        None,
        "q = 0 final marginal {}",
        flat.final_marginal()
    );
}

#[test]
fn runs_are_reproducible_from_config() {
    let mut cfg = TrainConfig::cold(0.5, 11);
    cfg.steps = 20;
    let text = cfg.to_toml();
    let parsed: TrainConfig = text.parse().unwrap();
    assert_eq!(parsed, cfg);
    let (a, b) = (
        task_for_config(&cfg).unwrap(),
        task_for_config(&parsed).unwrap(),
    );
    assert_eq!(a.to_bytes(), b.to_bytes());
    let (x, y) = (train(&cfg, &a).unwrap(), train(&parsed, &b).unwrap());
    assert_eq!(x.trace.to_rows(), y.trace.to_rows());
    assert_eq!(x.model, y.model);
}

#[test]
fn reward_proxy_equals_one_minus_l0() {
    let task = make_warm_task(0.3, 2).unwrap();
    let out = train(&warm_grpo(2, 10), &task).unwrap();
    for r in &out.trace.rows {
        assert!((1.0 - r.loss - r.mean_marginal).abs() < 1e-12);
    }
}
