use std::path::{Path, PathBuf};

use clap::Args;

use super::{CmdResult, Failure, Floats, OutArgs, RunDir};
use crate::csvio::{fmt_f64, write_table};
use crate::models::{write_model, AnyModel};
use crate::trainer::train::{escape_is_monotone, write_qsweep};
use crate::trainer::{calibrate_budget, qsweep, task_for_config, train, RunStatus, TrainConfig};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML config with dotted keys.
    #[arg(long)]
    pub config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct QsweepArgs {
    /// TOML config; `sweep.q` and `sweep.seeds` list the grid.
    #[arg(long)]
    pub config: PathBuf,
    /// Override `sweep.q`.
    #[arg(long)]
    pub q: Option<Floats>,
    /// Override `sweep.seeds`, comma-separated.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Set the step budget to this multiple of the q = 1 escape step.
    #[arg(long)]
    pub calibrate: Option<usize>,
    /// Longest q = 1 calibration run.
    #[arg(long, default_value_t = 20_000)]
    pub calibrate_max: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

fn load_config(path: &Path) -> Result<TrainConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(text.parse()?)
}

pub fn run_train(a: &TrainArgs) -> CmdResult {
    let mut cfg = load_config(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let snapshot = cfg.to_toml();
    let task = task_for_config(&cfg)?;
    let mut dir = RunDir::create("train", &snapshot, &a.out)?;
    std::fs::write(dir.file("config.toml")?, &snapshot).map_err(crate::Error::from)?;
    std::fs::write(dir.file("task.txt")?, task.to_bytes()).map_err(crate::Error::from)?;
    let out = train(&cfg, &task)?;
    out.trace.write_csv(&dir.file("metrics.csv")?, dir.meta())?;
    let curve: Vec<Vec<String>> = out
        .trace
        .rows
        .iter()
        .map(|r| vec![r.step.to_string(), fmt_f64(r.mean_marginal)])
        .collect();
    write_table(
        &dir.file("plot/mean_marginal.csv")?,
        dir.meta(),
        &["step", "mean_marginal"],
        &curve,
    )?;
    std::fs::write(
        dir.file("checkpoint.model")?,
        write_model(&AnyModel::Latent(out.model)),
    )
    .map_err(crate::Error::from)?;
    let escape = out.trace.escape_step();
    dir.note(
        "escape_step",
        escape.map_or("none".into(), |s| s.to_string()),
    );
    dir.note("final_marginal", out.trace.final_marginal());
    dir.note("steps_run", out.trace.steps_run);
    dir.note("degenerate_pools", out.trace.degenerate_pools);
    println!(
        "{}: {} steps, final mean marginal {:.6}, escape step {}",
        out.trace.status.as_str(),
        out.trace.steps_run,
        out.trace.final_marginal(),
        escape.map_or("none".into(), |s| s.to_string())
    );
    dir.finish(out.trace.status.as_str())?;
    match out.trace.status {
        RunStatus::Completed => Ok(()),
        RunStatus::Diverged => Err(Failure::Runtime(crate::Error::Numerical(format!(
            "training diverged at step {}",
            out.trace.steps_run
        )))),
    }
}

pub fn run_qsweep(a: &QsweepArgs) -> CmdResult {
    let mut cfg = load_config(&a.config)?;
    if let Some(q) = &a.q {
        cfg.sweep.q = q.0.clone();
    }
    if let Some(s) = &a.seeds {
        cfg.sweep.seeds = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<u64>()
                    .map_err(|e| Failure::Usage(format!("--seeds: `{t}`: {e}")))
            })
            .collect::<Result<_, _>>()?;
    }
    if cfg.sweep.q.is_empty() {
        return Err(Failure::Usage(
            "the q list is empty; set sweep.q or pass --q".into(),
        ));
    }
    cfg.validate()?;
    let seeds = if cfg.sweep.seeds.is_empty() {
        vec![cfg.seed]
    } else {
        cfg.sweep.seeds.clone()
    };
    let task = task_for_config(&cfg)?;
    if let Some(factor) = a.calibrate {
        cfg.steps = calibrate_budget(&cfg, &task, a.calibrate_max, factor)?;
        println!("calibrated budget: {} steps", cfg.steps);
    }
    let snapshot = format!("{}calibrate = {:?}\n", cfg.to_toml(), a.calibrate);
    let mut dir = RunDir::create("qsweep", &snapshot, &a.out)?;
    std::fs::write(dir.file("config.toml")?, cfg.to_toml()).map_err(crate::Error::from)?;
    let rows = qsweep(&cfg, &cfg.sweep.q, &seeds, &task)?;
    write_qsweep(&dir.file("qsweep.csv")?, dir.meta(), &rows)?;
    let mut series = Vec::new();
    for &q in &cfg.sweep.q {
        let sel: Vec<_> = rows.iter().filter(|r| r.q == q).collect();
        let frac = sel.iter().filter(|r| r.escape_step.is_some()).count() as f64 / sel.len() as f64;
        series.push(vec![fmt_f64(q), fmt_f64(frac)]);
        println!(
            "q = {q}: escaped in {} of {} runs",
            sel.iter().filter(|r| r.escape_step.is_some()).count(),
            sel.len()
        );
    }
    write_table(
        &dir.file("plot/escape_vs_q.csv")?,
        dir.meta(),
        &["q", "escape_fraction"],
        &series,
    )?;
    let errors = rows
        .iter()
        .filter(|r| r.status.starts_with("error"))
        .count();
    let monotone = escape_is_monotone(&rows);
    println!("escape indicator monotone in q: {monotone}");
    dir.note("steps", cfg.steps);
    dir.note("monotone", monotone);
    dir.note("failed_runs", errors);
    dir.finish(if errors == 0 { "completed" } else { "partial" })?;
    Ok(())
}
