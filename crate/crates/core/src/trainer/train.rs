//! Minibatch SGD with per-example pool estimators.
//!
//! Streams: batch selection from `(seed, "batch", step)`, example `i` at
//! `step` from `(seed, "example", step * N + i)`, evaluation at `step` from
//! `(seed, "eval", step)`. Per-example gradients run in parallel and are
//! summed in example order, so a run is a pure function of `(config, task)`.

use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;

use super::config::{Method, TrainConfig};
use super::evaluate::evaluate;
use super::task::{mean_marginal, Task};
use crate::csvio::{fmt_f64, fmt_opt, write_table, CsvMeta};
use crate::error::{Error, Result};
use crate::estimators::{garl_rloo, paft};
use crate::models::{exact_loss, sample_prior, Example, LatentSeqModel, Model};
use crate::qcore::QParam;
use crate::rng::Stream;

/// Any parameter beyond this magnitude halts training.
pub const DIVERGENCE_LIMIT: f64 = 1e4;
/// Mean exact marginal that counts as escape.
pub const ESCAPE_LEVEL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    Diverged,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub p1: f64,
    pub pk: f64,
    pub majk: f64,
    pub mean_marginal: f64,
    /// Exact mean `l_q` over the dataset.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTrace {
    pub rows: Vec<MetricsRow>,
    pub status: RunStatus,
    pub steps_run: usize,
    /// Estimator calls that hit a pool with no usable weight and contributed nothing.
    pub degenerate_pools: usize,
}

impl MetricsTrace {
    /// First evaluated step with mean marginal above [`ESCAPE_LEVEL`].
    pub fn escape_step(&self) -> Option<usize> {
        self.rows
            .iter()
            .find(|r| r.mean_marginal > ESCAPE_LEVEL)
            .map(|r| r.step)
    }

    pub fn final_marginal(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.mean_marginal)
    }

    pub fn to_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.step.to_string(),
                    fmt_f64(r.p1),
                    fmt_f64(r.pk),
                    fmt_f64(r.majk),
                    fmt_f64(r.mean_marginal),
                    fmt_f64(r.loss),
                ]
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path, meta: &CsvMeta) -> Result<()> {
        write_table(
            path,
            meta,
            &["step", "p1", "pk", "majk", "mean_marginal", "loss"],
            &self.to_rows(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub trace: MetricsTrace,
    pub model: LatentSeqModel,
}

fn mean_loss(model: &LatentSeqModel, data: &[Example], q: QParam) -> Result<f64> {
    let mut total = 0.0;
    for ex in data {
        total += exact_loss(model, ex, q)?;
    }
    Ok(total / data.len() as f64)
}

fn eval_row(
    model: &LatentSeqModel,
    data: &[Example],
    cfg: &TrainConfig,
    step: usize,
) -> Result<MetricsRow> {
    let mut s = Stream::derive(cfg.seed, "eval", step as u64);
    let e = evaluate(model, data, cfg.eval.k, cfg.eval.samples, &mut s)?;
    Ok(MetricsRow {
        step,
        p1: e.p1,
        pk: e.pk,
        majk: e.majk,
        mean_marginal: mean_marginal(model, data)?,
        loss: mean_loss(model, data, cfg.qparam())?,
    })
}

/// Normalized per-example gradient estimate; `None` for a degenerate pool.
pub fn example_gradient(
    model: &LatentSeqModel,
    ex: &Example,
    cfg: &TrainConfig,
    stream: &mut Stream,
) -> Result<Option<Vec<f64>>> {
    let q = if cfg.method == Method::Grpo {
        QParam::ZERO
    } else {
        cfg.qparam()
    };
    let pool = sample_prior(model, ex, cfg.m, stream)?;
    let est = match cfg.method {
        Method::Grpo | Method::Garl => garl_rloo(&pool, q),
        Method::Paft => paft(&pool, q, cfg.k.unwrap_or(cfg.m), stream),
    };
    match est {
        Ok(e) => Ok(Some(e.normalized().grad.values)),
        Err(Error::DegeneratePool(_) | Error::ParticleDegeneracy(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Run `cfg.steps` SGD steps from the task's model. Metrics are recorded at
/// step 0, every `eval.every` steps, and after the last step.
pub fn train(cfg: &TrainConfig, task: &Task) -> Result<TrainOutcome> {
    run(cfg, task, false)
}

fn run(cfg: &TrainConfig, task: &Task, stop_on_escape: bool) -> Result<TrainOutcome> {
    cfg.validate()?;
    let data = &task.dataset;
    if data.is_empty() {
        return Err(Error::Empty("training dataset is empty"));
    }
    let n = data.len();
    let mut model = task.model.clone();
    let n_params = model.num_params();
    let mut rows = Vec::new();
    let mut status = RunStatus::Completed;
    let mut degenerate = 0;
    let mut step = 0;
    while step < cfg.steps {
        if step % cfg.eval.every == 0 {
            let row = eval_row(&model, data, cfg, step)?;
            rows.push(row);
            if stop_on_escape && row.mean_marginal > ESCAPE_LEVEL {
                break;
            }
        }
        let batch: Vec<usize> = if cfg.batch >= n {
            (0..n).collect()
        } else {
            let mut s = Stream::derive(cfg.seed, "batch", step as u64);
            let mut idx = sample_indices(s.rng(), n, cfg.batch).into_vec();
            idx.sort_unstable();
            idx
        };
        let grads: Vec<Option<Vec<f64>>> = batch
            .par_iter()
            .map(|&i| {
                let mut s = Stream::derive(cfg.seed, "example", (step * n + i) as u64);
                example_gradient(&model, &data[i], cfg, &mut s)
            })
            .collect::<Result<_>>()?;
        let mut g = vec![0.0; n_params];
        for grad in &grads {
            match grad {
                Some(v) => g.iter_mut().zip(v).for_each(|(a, b)| *a += b),
                None => degenerate += 1,
            }
        }
        let scale = 1.0 / batch.len() as f64;
        g.iter_mut().for_each(|v| *v *= scale);
        if let Some(c) = cfg.clip {
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > c {
                let r = c / norm;
                g.iter_mut().for_each(|v| *v *= r);
            }
        }
        for (p, v) in model.params_mut().iter_mut().zip(&g) {
            *p -= cfg.lr * v;
        }
        step += 1;
        if model
            .params()
            .iter()
            .any(|p| !(p.abs() <= DIVERGENCE_LIMIT))
        {
            status = RunStatus::Diverged;
            break;
        }
    }
    if status == RunStatus::Completed && rows.last().is_none_or(|r| r.step != step) {
        rows.push(eval_row(&model, data, cfg, step)?);
    }
    Ok(TrainOutcome {
        trace: MetricsTrace {
            rows,
            status,
            steps_run: step,
            degenerate_pools: degenerate,
        },
        model,
    })
}

/// Step budget for cold-start comparisons: `factor` times the escape step
/// of the same configuration at `q = 1`.
pub fn calibrate_budget(
    cfg: &TrainConfig,
    task: &Task,
    max_steps: usize,
    factor: usize,
) -> Result<usize> {
    let mut probe = cfg.clone();
    probe.method = Method::Garl;
    probe.q = 1.0;
    probe.steps = max_steps;
    probe.eval.every = 1;
    probe.eval.k = 1;
    let out = run(&probe, task, true)?;
    let t1 = out
        .trace
        .escape_step()
        .ok_or_else(|| Error::UnreachableTarget {
            target: ESCAPE_LEVEL,
            reason: format!("q = 1 did not escape within {max_steps} steps"),
        })?;
    Ok(factor * t1.max(1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QSweepRow {
    pub q: f64,
    pub seed: u64,
    pub escape_step: Option<usize>,
    pub final_marginal: f64,
    pub status: String,
}

/// Train every `(q, seed)` pair; rows are q-major in the given order.
/// A failing run is recorded in its row and does not stop the sweep.
pub fn qsweep(
    base: &TrainConfig,
    qs: &[f64],
    seeds: &[u64],
    task: &Task,
) -> Result<Vec<QSweepRow>> {
    if qs.len() < 2 {
        return Err(Error::InsufficientGrid(format!(
            "q sweep needs at least two values, got {}",
            qs.len()
        )));
    }
    if seeds.is_empty() {
        return Err(Error::Empty("q sweep needs at least one seed"));
    }
    let jobs: Vec<(f64, u64)> = qs
        .iter()
        .flat_map(|&q| seeds.iter().map(move |&s| (q, s)))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|&(q, seed)| {
            let mut cfg = base.clone();
            cfg.q = q;
            cfg.seed = seed;
            if cfg.method == Method::Grpo && q != 0.0 {
                cfg.method = Method::Garl;
            }
            match train(&cfg, task) {
                Ok(o) => QSweepRow {
                    q,
                    seed,
                    escape_step: o.trace.escape_step(),
                    final_marginal: o.trace.final_marginal(),
                    status: o.trace.status.as_str().into(),
                },
                Err(e) => QSweepRow {
                    q,
                    seed,
                    escape_step: None,
                    final_marginal: f64::NAN,
                    status: format!("error: {e}"),
                },
            }
        })
        .collect())
}

/// Per-seed rows followed by one `mean` row per q with the escape fraction
/// and mean final marginal.
pub fn write_qsweep(path: &Path, meta: &CsvMeta, rows: &[QSweepRow]) -> Result<()> {
    let mut out: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.q),
                r.seed.to_string(),
                r.escape_step.map(|s| s.to_string()).unwrap_or_default(),
                u8::from(r.escape_step.is_some()).to_string(),
                fmt_f64(r.final_marginal),
                r.status.clone(),
            ]
        })
        .collect();
    let mut qs: Vec<f64> = Vec::new();
    for r in rows {
        if !qs.contains(&r.q) {
            qs.push(r.q);
        }
    }
    for q in qs {
        let sel: Vec<&QSweepRow> = rows.iter().filter(|r| r.q == q).collect();
        let frac = sel.iter().filter(|r| r.escape_step.is_some()).count() as f64 / sel.len() as f64;
        let fm = sel.iter().map(|r| r.final_marginal).sum::<f64>() / sel.len() as f64;
        let steps: Vec<f64> = sel
            .iter()
            .filter_map(|r| r.escape_step.map(|s| s as f64))
            .collect();
        let mean_step =
            (steps.len() == sel.len()).then(|| steps.iter().sum::<f64>() / steps.len() as f64);
        out.push(vec![
            fmt_f64(q),
            "mean".into(),
            fmt_opt(mean_step),
            fmt_f64(frac),
            fmt_f64(fm),
            String::new(),
        ]);
    }
    write_table(
        path,
        meta,
        &[
            "q",
            "seed",
            "escape_step",
            "escaped",
            "final_marginal",
            "status",
        ],
        &out,
    )
}

/// Escape indicators are nondecreasing along the given q order.
pub fn escape_is_monotone(rows: &[QSweepRow]) -> bool {
    let esc: Vec<bool> = rows.iter().map(|r| r.escape_step.is_some()).collect();
    esc.windows(2).all(|w| w[0] <= w[1])
}

/// Mean marginal of the corrupted targets.
pub fn contamination(model: &LatentSeqModel, data: &[Example]) -> Result<f64> {
    let bad: Vec<Example> = data.iter().filter(|e| e.corrupted).cloned().collect();
    mean_marginal(model, &bad)
}
