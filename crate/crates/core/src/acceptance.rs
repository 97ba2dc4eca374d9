//! The acceptance suite: twelve pass/fail criteria with pinned tolerances.
//!
//! Each criterion writes its measurements as CSV under the suite directory.
//! Criterion 12 reruns criteria 1 to 11 into a scratch directory and
//! byte-compares every file.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::csvio::{content_hash, fmt_f64, write_table, CsvMeta};
use crate::dynamics::{
    exact_sigmoid_time, fit_escape_exponent, integrate_noise_flow, integrate_sigmoid_flow,
    near_optimality_ratio, noise_equilibrium, noise_rate_exponent, EscapeFit, FitKind, TraceStatus,
};
use crate::dynamics::{write_sweep, SweepRow};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorTag, Trajectory};
use crate::lab::{compare_estimators, fit_bias_law, measure_bias_variance, LabOptions};
use crate::models::{
    finite_diff_grad, loss_gradients, relative_error, Example, LatentDims, LatentSeqModel, Model,
    DEFAULT_FD_STEP,
};
use crate::oracle::{minimize_categorical, OracleOptions};
use crate::qcore::{escort_minimizer, QParam, SimplexPoint, SuccessProb};
use crate::rng::Stream;
use crate::trainer::train::{escape_is_monotone, write_qsweep};
use crate::trainer::{
    calibrate_budget, evaluate, make_cold_task, make_warm_task, qsweep, train, Method, Scenario,
    TrainConfig,
};

/// Master seed of the reference suite run.
pub const DEFAULT_SEED: u64 = 20_240_601;

pub const ESCORT_TOL: f64 = 1e-6;
pub const FACTORIZATION_TOL: f64 = 1e-10;
pub const FD_TOL: f64 = 1e-5;
pub const EXPONENT_TOL: f64 = 0.05;
pub const LOG_R2_MIN: f64 = 0.999;
pub const ODE_QUAD_RTOL: f64 = 1e-4;
pub const EQUILIBRIUM_RTOL: f64 = 1e-8;
pub const EPS_SCALING_TOL: f64 = 0.2;
pub const NEAR_OPT_TOL: f64 = 5e-3;
pub const BIAS_LAW_SE: f64 = 3.0;
pub const REWARD_SE: f64 = 3.0;

/// Escape-time grid, `p0` from `1e-2` to `1e-7`.
pub const P0_GRID: [f64; 6] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7];
pub const ESCAPE_DELTA: f64 = 0.5;
pub const SWEEP_Q: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
    pub limit_seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {} ({:.1}s, limit {:.0}s): {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.limit_seconds,
            self.detail
        )
    }
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

pub struct Ctx {
    pub seed: u64,
    pub dir: PathBuf,
    pub meta: CsvMeta,
}

impl Ctx {
    pub fn new(seed: u64, dir: &Path) -> Self {
        let config = format!("selftest seed={seed}");
        let run = format!("{config} version={}", env!("CARGO_PKG_VERSION"));
        Self {
            seed,
            dir: dir.to_path_buf(),
            meta: CsvMeta::new(
                content_hash(run.as_bytes()),
                content_hash(config.as_bytes()),
            ),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn stream(&self, component: &str) -> Stream {
        Stream::derive(self.seed, component, 0)
    }

    fn seed_for(&self, component: &str) -> u64 {
        crate::rng::derive_seed(self.seed, component, 0)
    }
}

type CriterionFn = fn(&Ctx) -> Result<Outcome>;

const CRITERIA: [(u8, &str, f64, CriterionFn); 11] = [
    (1, "escort oracle equivalence", 10.0, c01_escort),
    (2, "dual factorization identity", 30.0, c02_factorization),
    (3, "sigmoid escape-rate exponents", 60.0, c03_exponents),
    (4, "ODE vs quadrature", 60.0, c04_ode_quadrature),
    (5, "noise fitting", 120.0, c05_noise),
    (6, "near-optimality", 10.0, c06_near_optimality),
    (
        7,
        "estimator unbiasedness and identities",
        120.0,
        c07_identities,
    ),
    (8, "bias law", 300.0, c08_bias_law),
    (9, "variance ordering", 120.0, c09_variance),
    (10, "cold-start escape in q", 600.0, c10_cold_escape),
    (11, "expected reward equals marginal", 60.0, c11_reward),
];

pub const SUITE_LIMIT_SECONDS: f64 = 25.0 * 60.0;

/// Identifiers `1..=11` of the single-run criteria.
pub fn criterion_ids() -> Vec<u8> {
    CRITERIA.iter().map(|c| c.0).collect()
}

/// Run one of criteria 1 to 11.
pub fn run_criterion(id: u8, ctx: &Ctx) -> Result<CriterionResult> {
    let (_, name, limit, f) = CRITERIA
        .iter()
        .find(|c| c.0 == id)
        .ok_or_else(|| Error::Domain(format!("no criterion {id}")))?;
    fs::create_dir_all(&ctx.dir)?;
    let start = Instant::now();
    let res = f(ctx);
    let seconds = start.elapsed().as_secs_f64();
    let (pass, detail) = match res {
        Ok(o) => (o.pass, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let within = seconds <= *limit;
    let detail = if within {
        detail
    } else {
        format!("{detail}; runtime over limit")
    };
    Ok(CriterionResult {
        id,
        name,
        pass: pass && within,
        detail,
        seconds,
        limit_seconds: *limit,
    })
}

/// Files under `a` whose bytes differ from (or are missing in) `b`.
pub fn compare_dirs(a: &Path, b: &Path) -> Result<Vec<String>> {
    let mut names: Vec<String> = Vec::new();
    for dir in [a, b] {
        for e in fs::read_dir(dir)? {
            let n = e?.file_name().to_string_lossy().into_owned();
            if n.ends_with(".csv") && !names.contains(&n) {
                names.push(n);
            }
        }
    }
    names.sort();
    let mut diff = Vec::new();
    for n in names {
        let (x, y) = (fs::read(a.join(&n)), fs::read(b.join(&n)));
        match (x, y) {
            (Ok(x), Ok(y)) if x == y => {}
            _ => diff.push(n),
        }
    }
    Ok(diff)
}

/// Criterion 12 given a completed first run in `ctx.dir`.
pub fn run_determinism(
    ctx: &Ctx,
    first_run_seconds: f64,
    mut on_result: impl FnMut(&CriterionResult),
) -> Result<CriterionResult> {
    let start = Instant::now();
    let rerun = ctx.dir.join("rerun");
    if rerun.exists() {
        fs::remove_dir_all(&rerun)?;
    }
    let ctx2 = Ctx {
        seed: ctx.seed,
        dir: rerun.clone(),
        meta: ctx.meta.clone(),
    };
    for id in criterion_ids() {
        let r = run_criterion(id, &ctx2)?;
        on_result(&r);
    }
    let diff = compare_dirs(&ctx.dir, &rerun)?;
    let n_files = fs::read_dir(&rerun)?.count();
    fs::remove_dir_all(&rerun)?;
    let seconds = start.elapsed().as_secs_f64();
    let total = first_run_seconds + seconds;
    let pass = diff.is_empty() && n_files > 0 && total <= SUITE_LIMIT_SECONDS;
    let detail = if diff.is_empty() {
        format!("{n_files} CSV files byte-identical across two runs; suite total {total:.0}s")
    } else {
        format!("differing files: {}", diff.join(", "))
    };
    Ok(CriterionResult {
        id: 12,
        name: "determinism",
        pass,
        detail,
        seconds,
        limit_seconds: SUITE_LIMIT_SECONDS,
    })
}

/// Run all twelve criteria, reporting each result as it completes.
pub fn run_suite(
    seed: u64,
    dir: &Path,
    mut on_result: impl FnMut(&CriterionResult),
) -> Result<Vec<CriterionResult>> {
    let ctx = Ctx::new(seed, dir);
    let mut out = Vec::new();
    let mut total = 0.0;
    for id in criterion_ids() {
        let r = run_criterion(id, &ctx)?;
        total += r.seconds;
        on_result(&r);
        out.push(r);
    }
    let r = run_determinism(&ctx, total, |_| {})?;
    on_result(&r);
    out.push(r);
    Ok(out)
}

fn q(v: f64) -> Result<QParam> {
    QParam::new(v)
}

fn sp(v: f64) -> Result<SuccessProb> {
    SuccessProb::new(v)
}

// ---- 1 ----

fn c01_escort(ctx: &Ctx) -> Result<Outcome> {
    let mut s = ctx.stream("c01");
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let k = 2 + (s.uniform() * 5.0) as usize;
        let raw: Vec<f64> = (0..k).map(|_| 0.05 + s.uniform()).collect();
        let total: f64 = raw.iter().sum();
        let alpha = SimplexPoint::new(raw.iter().map(|v| v / total).collect())?;
        let qq = 1.0 - s.uniform();
        let closed = escort_minimizer(&alpha, q(qq)?)?;
        let numeric = minimize_categorical(&alpha, q(qq)?, OracleOptions::default())?;
        let gap = closed
            .weights()
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(gap);
        rows.push(vec![
            i.to_string(),
            k.to_string(),
            fmt_f64(qq),
            fmt_f64(gap),
        ]);
    }
    write_table(
        &ctx.path("c01_escort.csv"),
        &ctx.meta,
        &["case", "K", "q", "max_gap"],
        &rows,
    )?;
    outcome(
        worst <= ESCORT_TOL,
        format!("max coordinate gap {worst:.2e} over 50 cases (tol {ESCORT_TOL:e})"),
    )
}

// ---- 2 ----

/// `grad P` by linear-space enumeration of the joint, independent of the
/// log-space marginal code path.
fn direct_grad_p(model: &LatentSeqModel, ex: &Example) -> (f64, Vec<f64>) {
    let mut p = 0.0;
    let mut g = vec![0.0; model.num_params()];
    for z in 0..model.num_latents() {
        let t: Trajectory = model.trajectory(ex, z);
        let joint = (t.log_prior + t.log_w).exp();
        p += joint;
        t.prior.axpy(joint, &mut g);
        t.lik.axpy(joint, &mut g);
    }
    (p, g)
}

fn random_dims(s: &mut Stream) -> LatentDims {
    let pick = |s: &mut Stream, lo: usize, hi: usize| {
        lo + ((s.uniform() * (hi - lo + 1) as f64) as usize).min(hi - lo)
    };
    LatentDims {
        n_inputs: pick(s, 1, 2),
        latent_vocab: pick(s, 2, 3),
        latent_len: pick(s, 1, 2),
        output_vocab: pick(s, 2, 3),
        output_len: pick(s, 1, 2),
    }
}

fn c02_factorization(ctx: &Ctx) -> Result<Outcome> {
    let mut s = ctx.stream("c02");
    let mut rows = Vec::new();
    let (mut worst_fac, mut worst_fd): (f64, f64) = (0.0, 0.0);
    for i in 0..100 {
        let d = random_dims(&mut s);
        let model = LatentSeqModel::random(d, 1.5, &mut s)?;
        let target: Vec<usize> = (0..d.output_len)
            .map(|_| s.categorical(&vec![1.0; d.output_vocab]))
            .collect();
        let ex = Example::new(s.categorical(&vec![1.0; d.n_inputs]), target);
        let qq = s.uniform();
        let lg = loss_gradients(&model, &ex, q(qq)?)?;
        let (p, grad_p) = direct_grad_p(&model, &ex);
        let direct: Vec<f64> = grad_p.iter().map(|g| -p.powf(-qq) * g).collect();
        // -P^-q grad P = P^-q grad l_0 = P^(1-q) grad l_1
        let via_l0: Vec<f64> = lg.grad_l0.iter().map(|g| lg.p.powf(-qq) * g).collect();
        let via_l1: Vec<f64> = lg.grad_l1.iter().map(|g| lg.p.powf(1.0 - qq) * g).collect();
        let max_diff = |a: &[f64]| {
            a.iter()
                .zip(&direct)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        let fac = max_diff(&via_l0)
            .max(max_diff(&via_l1))
            .max(max_diff(&lg.grad_lq));
        let fd = finite_diff_grad(&model, &ex, q(qq)?, DEFAULT_FD_STEP)?;
        let fd_err = relative_error(&fd.values, &direct, 1e-8);
        worst_fac = worst_fac.max(fac);
        worst_fd = worst_fd.max(fd_err);
        rows.push(vec![
            i.to_string(),
            model.num_params().to_string(),
            fmt_f64(qq),
            fmt_f64(fac),
            fmt_f64(fd_err),
        ]);
    }
    write_table(
        &ctx.path("c02_factorization.csv"),
        &ctx.meta,
        &["model", "params", "q", "factorization_err", "fd_rel_err"],
        &rows,
    )?;
    outcome(
        worst_fac <= FACTORIZATION_TOL && worst_fd <= FD_TOL,
        format!("factorization max-norm {worst_fac:.2e} (tol {FACTORIZATION_TOL:e}), finite-difference rel {worst_fd:.2e} (tol {FD_TOL:e})"),
    )
}

// ---- 3, 4 ----

const BUDGET: f64 = 1e12;

fn ode_times(qq: f64) -> Result<Vec<f64>> {
    P0_GRID
        .iter()
        .map(|&p0| {
            let tr = integrate_sigmoid_flow(q(qq)?, sp(p0)?, sp(ESCAPE_DELTA)?, BUDGET)?;
            tr.crossing(ESCAPE_DELTA)
                .ok_or_else(|| Error::Numerical(format!("no crossing from p0 = {p0}")))
        })
        .collect()
}

fn clean_fit(qq: f64) -> Result<(Vec<f64>, EscapeFit)> {
    let times = ode_times(qq)?;
    let fit = fit_escape_exponent(q(qq)?, &P0_GRID, &times)?;
    Ok((times, fit))
}

fn c03_exponents(ctx: &Ctx) -> Result<Outcome> {
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    let mut pass = true;
    let mut notes = Vec::new();
    for qq in SWEEP_Q {
        let (times, fit) = clean_fit(qq)?;
        for (&p0, &t) in P0_GRID.iter().zip(&times) {
            rows.push(SweepRow {
                q: qq,
                p0,
                eps: None,
                t: Some(t),
                status: TraceStatus::ReachedTarget.as_str().into(),
            });
        }
        if fit.kind == FitKind::Logarithmic {
            pass &= fit.r2 > LOG_R2_MIN;
            notes.push(format!("q=1 r2={:.6}", fit.r2));
        } else {
            pass &= (fit.slope - (1.0 - qq)).abs() <= EXPONENT_TOL;
            notes.push(format!("q={qq} slope={:.4}", fit.slope));
        }
        fits.push((qq, fit));
    }
    write_sweep(&ctx.path("c03_escape_sweep.csv"), &ctx.meta, &rows, &fits)?;
    outcome(pass, notes.join(", "))
}

fn c04_ode_quadrature(ctx: &Ctx) -> Result<Outcome> {
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for qq in SWEEP_Q {
        let times = ode_times(qq)?;
        for (&p0, &t) in P0_GRID.iter().zip(&times) {
            let exact = exact_sigmoid_time(q(qq)?, sp(p0)?, sp(ESCAPE_DELTA)?)?;
            let rel = (t / exact - 1.0).abs();
            worst = worst.max(rel);
            rows.push(vec![
                fmt_f64(qq),
                fmt_f64(p0),
                fmt_f64(t),
                fmt_f64(exact),
                fmt_f64(rel),
            ]);
        }
    }
    write_table(
        &ctx.path("c04_ode_quadrature.csv"),
        &ctx.meta,
        &["q", "p0", "T_ode", "T_quad", "rel_err"],
        &rows,
    )?;
    outcome(
        worst <= ODE_QUAD_RTOL,
        format!("max relative gap {worst:.2e} over 30 points (tol {ODE_QUAD_RTOL:e})"),
    )
}

// ---- 5 ----

fn c05_noise(ctx: &Ctx) -> Result<Outcome> {
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    // equilibrium against the escort of (1 - eps, eps)
    let mut worst_eq: f64 = 0.0;
    for qq in [0.25, 0.5, 0.75, 1.0] {
        for eps in [0.05, 0.1, 0.2] {
            let star = noise_equilibrium(q(qq)?, eps)?;
            let escort =
                escort_minimizer(&SimplexPoint::new(vec![1.0 - eps, eps])?, q(qq)?)?.weights()[1];
            let rel = (star / escort - 1.0).abs();
            worst_eq = worst_eq.max(rel);
            rows.push(vec![
                "equilibrium".into(),
                fmt_f64(qq),
                fmt_f64(eps),
                fmt_f64(star),
                fmt_f64(escort),
            ]);
        }
    }
    let eq_ok = worst_eq <= EQUILIBRIUM_RTOL;
    notes.push(format!("equilibrium rel gap {worst_eq:.1e}"));
    // q = 1 equilibrium tends to eps
    let mut worst_q1: f64 = 0.0;
    for eps in [1e-4, 1e-3, 1e-2] {
        let star = noise_equilibrium(QParam::ONE, eps)?;
        worst_q1 = worst_q1.max((star / eps - 1.0).abs());
        rows.push(vec![
            "q1-equilibrium".into(),
            "1".into(),
            fmt_f64(eps),
            fmt_f64(star),
            fmt_f64(eps),
        ]);
    }
    let q1_ok = worst_q1 <= EQUILIBRIUM_RTOL;
    // q = 0 contamination only falls
    let tr = integrate_noise_flow(QParam::ZERO, 0.1, sp(1e-2)?, sp(0.5)?, 1e4)?;
    let decreasing = tr.ptilde.windows(2).all(|w| w[1] < w[0]) && tr.crossing.is_none();
    rows.push(vec![
        "q0-flow".into(),
        "0".into(),
        "0.1".into(),
        fmt_f64(*tr.ptilde.last().unwrap_or(&f64::NAN)),
        tr.status.as_str().into(),
    ]);
    notes.push(format!(
        "q=0 decreasing over {} steps: {decreasing}",
        tr.ptilde.len()
    ));
    // exponents and 1/eps scaling
    let eps = 0.1;
    let mut exp_ok = true;
    let mut scale_ok = true;
    for qq in [0.25, 0.5, 0.75, 1.0] {
        let eta = 0.1 * noise_equilibrium(q(qq)?, eps)?;
        let grid: Vec<f64> = P0_GRID.iter().map(|p| eta * p / ESCAPE_DELTA).collect();
        let rate = noise_rate_exponent(q(qq)?, eps, &grid, eta)?;
        let doubling = 2.0 * rate.eps_doubling_ratio;
        scale_ok &= (doubling - 1.0).abs() <= EPS_SCALING_TOL;
        if qq < 1.0 {
            let (_, clean) = clean_fit(qq)?;
            let gap = (rate.fit.slope - clean.slope).abs();
            exp_ok &= gap <= EXPONENT_TOL;
            notes.push(format!(
                "q={qq} noise slope {:.4} vs clean {:.4}, 2T(2eps)/T(eps)={doubling:.3}",
                rate.fit.slope, clean.slope
            ));
            rows.push(vec![
                "exponent".into(),
                fmt_f64(qq),
                fmt_f64(eps),
                fmt_f64(rate.fit.slope),
                fmt_f64(clean.slope),
            ]);
        } else {
            notes.push(format!("q=1 2T(2eps)/T(eps)={doubling:.3}"));
        }
        rows.push(vec![
            "eps-doubling".into(),
            fmt_f64(qq),
            fmt_f64(eps),
            fmt_f64(rate.eps_doubling_ratio),
            "0.5".into(),
        ]);
    }
    write_table(
        &ctx.path("c05_noise.csv"),
        &ctx.meta,
        &["check", "q", "eps", "value", "reference"],
        &rows,
    )?;
    outcome(
        eq_ok && q1_ok && decreasing && exp_ok && scale_ok,
        notes.join("; "),
    )
}

// ---- 6 ----

fn c06_near_optimality(ctx: &Ctx) -> Result<Outcome> {
    let eps0 = 1e-3;
    let r = near_optimality_ratio(QParam::ZERO, QParam::ONE, eps0, eps0 / 10.0)?;
    let same = near_optimality_ratio(q(0.5)?, q(0.5)?, eps0, eps0 / 10.0)?;
    write_table(
        &ctx.path("c06_near_optimality.csv"),
        &ctx.meta,
        &["q", "q2", "eps0", "eps1", "ratio"],
        &[
            vec![
                "0".into(),
                "1".into(),
                fmt_f64(eps0),
                fmt_f64(eps0 / 10.0),
                fmt_f64(r),
            ],
            vec![
                "0.5".into(),
                "0.5".into(),
                fmt_f64(eps0),
                fmt_f64(eps0 / 10.0),
                fmt_f64(same),
            ],
        ],
    )?;
    outcome(
        (r - 1.0).abs() < NEAR_OPT_TOL && same == 1.0,
        format!("T_0/T_1 - 1 = {:.2e} (tol {NEAR_OPT_TOL:e})", r - 1.0),
    )
}

// ---- 7, 8, 9 ----

/// Enumerable model shared by the estimator criteria.
pub fn estimator_model(seed: u64) -> Result<(LatentSeqModel, Example)> {
    let d = LatentDims {
        n_inputs: 1,
        latent_vocab: 2,
        latent_len: 2,
        output_vocab: 2,
        output_len: 2,
    };
    let model = LatentSeqModel::random(d, 1.0, &mut Stream::derive(seed, "estimator-model", 0))?;
    Ok((model, Example::new(0, vec![1, 0])))
}

fn flag_rows(name: &str, flags: &[crate::lab::Flag]) -> Vec<Vec<String>> {
    flags
        .iter()
        .map(|f| {
            vec![
                name.into(),
                f.name.clone(),
                u8::from(f.pass).to_string(),
                f.detail.clone(),
            ]
        })
        .collect()
}

fn c07_identities(ctx: &Ctx) -> Result<Outcome> {
    let (model, ex) = estimator_model(ctx.seed)?;
    let opts = LabOptions {
        replicates: 10_000,
        ..LabOptions::default()
    };
    let mut rows = Vec::new();
    let mut pass = true;
    let mut notes = Vec::new();
    for m in [2, 32] {
        let rep = measure_bias_variance(
            &model,
            &ex,
            EstimatorTag::Plugin,
            QParam::ZERO,
            m,
            &opts,
            ctx.seed_for(&format!("c07-plugin-{m}")),
        )?;
        pass &= rep.all_pass();
        notes.push(format!("plugin q=0 M={m} unbiased={}", rep.all_pass()));
        rows.extend(flag_rows(&format!("plugin-q0-M{m}"), &rep.flags));
    }
    let mut tower: f64 = 0.0;
    for qq in [0.0, 0.5, 1.0] {
        let rep = compare_estimators(
            &model,
            &ex,
            q(qq)?,
            16,
            &opts,
            ctx.seed_for(&format!("c07-paired-{qq}")),
        )?;
        let ok = rep.rloo_vs_plugin.zero_in_ci() && rep.tower_max_abs <= crate::lab::TOWER_TOL;
        pass &= ok;
        tower = tower.max(rep.tower_max_abs);
        notes.push(format!(
            "q={qq} rloo-plugin max|d|/ci={:.2}",
            rep.rloo_vs_plugin.worst_excess()
        ));
        rows.push(vec![
            format!("paired-q{qq}"),
            "rloo-plugin-mean".into(),
            u8::from(rep.rloo_vs_plugin.zero_in_ci()).to_string(),
            fmt_f64(rep.rloo_vs_plugin.worst_excess()),
        ]);
        rows.push(vec![
            format!("paired-q{qq}"),
            "paft-tower".into(),
            u8::from(rep.tower_max_abs <= crate::lab::TOWER_TOL).to_string(),
            fmt_f64(rep.tower_max_abs),
        ]);
    }
    notes.push(format!("tower residual {tower:.1e}"));
    write_table(
        &ctx.path("c07_identities.csv"),
        &ctx.meta,
        &["report", "check", "pass", "detail"],
        &rows,
    )?;
    outcome(pass, notes.join("; "))
}

pub const BIAS_LAW_M: [usize; 3] = [16, 32, 64];
pub const BIAS_LAW_REPLICATES: usize = 200_000;

fn c08_bias_law(ctx: &Ctx) -> Result<Outcome> {
    let (model, ex) = estimator_model(ctx.seed)?;
    let opts = LabOptions {
        replicates: BIAS_LAW_REPLICATES,
        ..LabOptions::default()
    };
    let qq = q(0.5)?;
    let reports = BIAS_LAW_M
        .iter()
        .map(|&m| {
            measure_bias_variance(
                &model,
                &ex,
                EstimatorTag::Plugin,
                qq,
                m,
                &opts,
                ctx.seed_for(&format!("c08-{m}")),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_bias_law(&reports)?;
    let rows: Vec<Vec<String>> = (0..fit.a.len())
        .map(|i| {
            vec![
                i.to_string(),
                fmt_f64(fit.a[i]),
                fmt_f64(fit.se_a[i]),
                fmt_f64(fit.a_predicted[i]),
                fmt_f64(fit.b[i]),
            ]
        })
        .collect();
    write_table(
        &ctx.path("c08_bias_law.csv"),
        &ctx.meta,
        &["coord", "a_fit", "se_a", "a_predicted", "b_fit"],
        &rows,
    )?;
    let degenerate_ok = reports.iter().all(|r| r.flags.iter().all(|f| f.pass));
    // power: the fit must also tell the leading coefficient apart from zero
    let power = fit
        .a
        .iter()
        .zip(&fit.se_a)
        .map(|(a, se)| a.abs() / se)
        .fold(0.0f64, f64::max);
    outcome(
        fit.pass(BIAS_LAW_SE) && power > BIAS_LAW_SE && degenerate_ok,
        format!("max |a - a_pred| / se_a = {:.2} (limit {BIAS_LAW_SE}), max |a| / se_a = {power:.1} (must exceed {BIAS_LAW_SE})", fit.worst_z),
    )
}

fn c09_variance(ctx: &Ctx) -> Result<Outcome> {
    let (model, ex) = estimator_model(ctx.seed)?;
    let opts = LabOptions {
        replicates: 10_000,
        k: Some(32),
        ..LabOptions::default()
    };
    let mut rows = Vec::new();
    let mut pass = true;
    let mut notes = Vec::new();
    for qq in [0.25, 0.75] {
        let rep = compare_estimators(
            &model,
            &ex,
            q(qq)?,
            32,
            &opts,
            ctx.seed_for(&format!("c09-{qq}")),
        )?;
        let dom = rep.paft_vs_plugin.variance_dominance();
        pass &= dom >= crate::lab::VARIANCE_DOMINANCE;
        notes.push(format!(
            "q={qq}: Var(paft) >= Var(plugin) on {:.1}% of coordinates",
            100.0 * dom
        ));
        for (i, (a, b)) in rep
            .paft_vs_plugin
            .var_a
            .iter()
            .zip(&rep.paft_vs_plugin.var_b)
            .enumerate()
        {
            rows.push(vec![fmt_f64(qq), i.to_string(), fmt_f64(*a), fmt_f64(*b)]);
        }
    }
    write_table(
        &ctx.path("c09_variance.csv"),
        &ctx.meta,
        &["q", "coord", "var_paft", "var_plugin"],
        &rows,
    )?;
    outcome(pass, notes.join("; "))
}

// ---- 10, 11 ----

/// Cold-start configuration used by the escape experiment.
pub fn cold_config(seed: u64) -> TrainConfig {
    TrainConfig::cold(1.0, seed)
}

/// Largest step count the q = 1 calibration probe may take.
pub const CALIBRATION_MAX_STEPS: usize = 20_000;

fn c10_cold_escape(ctx: &Ctx) -> Result<Outcome> {
    let task = make_cold_task(1e-3, ctx.seed_for("c10-task"))?;
    let mut cfg = cold_config(ctx.seed_for("c10-train"));
    let budget = calibrate_budget(&cfg, &task, CALIBRATION_MAX_STEPS, 10)?;
    cfg.steps = budget;
    let rows = qsweep(&cfg, &SWEEP_Q, &[cfg.seed], &task)?;
    write_qsweep(&ctx.path("c10_qsweep.csv"), &ctx.meta, &rows)?;
    let monotone = escape_is_monotone(&rows);
    let q0_fails = rows.first().is_some_and(|r| r.escape_step.is_none());
    let q1_escapes = rows.last().is_some_and(|r| r.escape_step.is_some());
    let pattern: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "q={}:{}",
                r.q,
                r.escape_step.map_or("-".into(), |s| s.to_string())
            )
        })
        .collect();
    outcome(
        monotone && q0_fails && q1_escapes,
        format!(
            "budget {budget} steps (10x q=1 escape); escape steps {}",
            pattern.join(" ")
        ),
    )
}

fn c11_reward(ctx: &Ctx) -> Result<Outcome> {
    let task = make_warm_task(0.3, ctx.seed_for("c11-task"))?;
    let mut cfg = TrainConfig::cold(0.0, ctx.seed_for("c11-train"));
    cfg.method = Method::Grpo;
    cfg.scenario = Scenario::Warm;
    cfg.lr = 2.0;
    cfg.steps = 50;
    let out = train(&cfg, &task)?;
    let marginal = crate::trainer::task::mean_marginal(&out.model, &task.dataset)?;
    let proxy = 1.0 - out.trace.rows.last().map_or(f64::NAN, |r| r.loss);
    let e = evaluate(
        &out.model,
        &task.dataset,
        16,
        200,
        &mut ctx.stream("c11-eval"),
    )?;
    let z = (e.p1 - marginal).abs() / e.p1_se;
    write_table(
        &ctx.path("c11_reward.csv"),
        &ctx.meta,
        &["measured_reward", "se", "mean_marginal", "one_minus_loss"],
        &[vec![
            fmt_f64(e.p1),
            fmt_f64(e.p1_se),
            fmt_f64(marginal),
            fmt_f64(proxy),
        ]],
    )?;
    outcome(
        z <= REWARD_SE && (proxy - marginal).abs() <= 1e-12,
        format!(
            "reward {:.4} vs mean marginal {marginal:.4}: {z:.2} SE (limit {REWARD_SE})",
            e.p1
        ),
    )
}
