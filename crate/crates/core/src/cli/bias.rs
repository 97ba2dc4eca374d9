use std::path::PathBuf;

use clap::Args;

use super::{CmdResult, EstimatorArg, Failure, OutArgs, RunDir};
use crate::csvio::{fmt_f64, write_table};
use crate::estimators::EstimatorTag;
use crate::lab::{
    compare_estimators, fit_bias_law, measure_bias_variance, summary_json, Flag, LabOptions,
};
use crate::models::{load_model, AnyModel, Example, LatentDims, LatentSeqModel};
use crate::qcore::QParam;
use crate::rng::Stream;

/// Bias-law checks accept fitted leading coefficients within this many SEs.
pub const BIAS_LAW_SE: f64 = 3.0;

#[derive(Debug, Args)]
pub struct BiasArgs {
    /// Latent model file; a random model is generated when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Dimensions `n_inputs,latent_vocab,latent_len,output_vocab,output_len`
    /// of the generated model.
    #[arg(long, default_value = "1,2,2,2,2")]
    pub dims: String,
    /// Logit scale of the generated model.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Input index of the example.
    #[arg(long, default_value_t = 0)]
    pub input: usize,
    /// Target sequence, comma-separated [default: y_t = (t + 1) mod output_vocab]
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Plugin)]
    pub estimator: EstimatorArg,
    #[arg(long, default_value_t = 0.0)]
    pub q: f64,
    /// Pool sizes, comma-separated.
    #[arg(long, default_value = "32")]
    pub m_grid: String,
    /// PAFT resample count [default: M]
    #[arg(long)]
    pub k: Option<usize>,
    /// Independent pools per pool size.
    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,
    /// Bootstrap resamples for standard errors.
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

fn usize_list(s: &str, what: &str) -> Result<Vec<usize>, Failure> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .map_err(|e| Failure::Usage(format!("{what}: `{t}`: {e}")))
        })
        .collect()
}

fn model_and_example(a: &BiasArgs) -> Result<(LatentSeqModel, Example, String), Failure> {
    let (model, origin) = match &a.model {
        Some(p) => match load_model(p)? {
            AnyModel::Latent(m) => {
                let text = std::fs::read(p).map_err(crate::Error::from)?;
                (m, format!("file:{}", crate::csvio::content_hash(&text)))
            }
            other => {
                return Err(Failure::Usage(format!(
                    "bias needs a latent model, got kind {}",
                    other.kind()
                )))
            }
        },
        None => {
            let d = usize_list(&a.dims, "--dims")?;
            let [n_inputs, latent_vocab, latent_len, output_vocab, output_len] = d[..] else {
                return Err(Failure::Usage(format!(
                    "--dims needs five values, got {}",
                    d.len()
                )));
            };
            let dims = LatentDims {
                n_inputs,
                latent_vocab,
                latent_len,
                output_vocab,
                output_len,
            };
            let m =
                LatentSeqModel::random(dims, a.scale, &mut Stream::derive(a.seed, "bias-model", 0))
                    .map_err(|e| Failure::Usage(e.to_string()))?;
            (m, format!("random:{}:{}", a.dims, a.scale))
        }
    };
    let d = model.dims();
    let target = match &a.target {
        Some(t) => usize_list(t, "--target")?,
        None => (0..d.output_len)
            .map(|t| (t + 1) % d.output_vocab)
            .collect(),
    };
    let ex = Example::new(a.input, target);
    model
        .check_example(&ex)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    Ok((model, ex, origin))
}

fn label(f: &Flag) -> String {
    match (f.name.as_str(), f.pass) {
        ("unbiased", true) => "bias: PASS (CI contains 0)".into(),
        ("unbiased", false) => format!("bias: FAIL (CI excludes 0; {})", f.detail),
        (n, p) => format!("{n}: {} ({})", if p { "PASS" } else { "FAIL" }, f.detail),
    }
}

pub fn run(a: &BiasArgs) -> CmdResult {
    let q = QParam::new(a.q)?;
    let ms = usize_list(&a.m_grid, "--m-grid")?;
    if ms.is_empty() || ms.iter().any(|&m| m < 2) {
        return Err(Failure::Usage(
            "--m-grid needs pool sizes of at least 2".into(),
        ));
    }
    if a.replicates < 2 || a.bootstrap < 2 {
        return Err(Failure::Usage(
            "--replicates and --bootstrap must be at least 2".into(),
        ));
    }
    let (model, ex, origin) = model_and_example(a)?;
    let snapshot = format!(
        "bias model={origin} input={} target={:?} estimator={:?} q={} m={ms:?} k={:?} replicates={} bootstrap={} seed={}",
        ex.input, ex.target, a.estimator, a.q, a.k, a.replicates, a.bootstrap, a.seed
    );
    let mut dir = RunDir::create("bias", &snapshot, &a.out)?;
    let opts = LabOptions {
        replicates: a.replicates,
        bootstrap: a.bootstrap,
        k: a.k,
        ..LabOptions::default()
    };
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    let mut check = |prefix: String, f: &Flag| {
        let l = format!("{prefix}{}", label(f));
        if !f.pass {
            failures.push(l.clone());
        }
        lines.push(l);
    };
    let mut json = Vec::new();
    match a.estimator {
        EstimatorArg::Compare => {
            for &m in &ms {
                let rep = compare_estimators(
                    &model,
                    &ex,
                    q,
                    m,
                    &opts,
                    crate::rng::derive_seed(a.seed, "bias", m as u64),
                )?;
                let rows: Vec<Vec<String>> = (0..rep.rloo_vs_plugin.mean_diff.len())
                    .map(|i| {
                        vec![
                            i.to_string(),
                            fmt_f64(rep.rloo_vs_plugin.mean_diff[i]),
                            fmt_f64(rep.rloo_vs_plugin.ci_half[i]),
                            fmt_f64(rep.paft_vs_plugin.mean_diff[i]),
                            fmt_f64(rep.paft_vs_plugin.ci_half[i]),
                            fmt_f64(rep.paft_vs_plugin.var_a[i]),
                            fmt_f64(rep.paft_vs_plugin.var_b[i]),
                        ]
                    })
                    .collect();
                write_table(
                    &dir.file(&format!("compare_M{m}.csv"))?,
                    dir.meta(),
                    &[
                        "coord",
                        "rloo_minus_plugin",
                        "rloo_ci_half",
                        "paft_minus_plugin",
                        "paft_ci_half",
                        "var_paft",
                        "var_plugin",
                    ],
                    &rows,
                )?;
                for f in &rep.flags {
                    check(format!("M={m} "), f);
                }
                json.push(summary_json(&rep)?);
            }
        }
        single => {
            let tag = match single {
                EstimatorArg::Plugin => EstimatorTag::Plugin,
                EstimatorArg::Rloo => EstimatorTag::Rloo,
                _ => EstimatorTag::Paft,
            };
            let mut reports = Vec::new();
            for &m in &ms {
                let rep = measure_bias_variance(
                    &model,
                    &ex,
                    tag,
                    q,
                    m,
                    &opts,
                    crate::rng::derive_seed(a.seed, "bias", m as u64),
                )?;
                rep.write_csv(
                    &dir.file(&format!("report_{}_M{m}.csv", tag.as_str()))?,
                    dir.meta(),
                )?;
                for f in &rep.flags {
                    check(format!("M={m} "), f);
                }
                json.push(summary_json(&rep)?);
                reports.push(rep);
            }
            if ms.len() >= 3 {
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
                    &dir.file("bias_law.csv")?,
                    dir.meta(),
                    &["coord", "a_fit", "se_a", "a_predicted", "b_fit"],
                    &rows,
                )?;
                let f = Flag {
                    name: "leading coefficient".into(),
                    pass: fit.pass(BIAS_LAW_SE),
                    detail: format!(
                        "max |a - a_predicted| / se = {:.2}, limit {BIAS_LAW_SE}",
                        fit.worst_z
                    ),
                };
                check(String::new(), &f);
            }
        }
    }
    std::fs::write(
        dir.file("summary.json")?,
        format!("[\n{}\n]\n", json.join(",\n")),
    )
    .map_err(crate::Error::from)?;
    for l in &lines {
        println!("{l}");
    }
    dir.note("failed_checks", failures.len());
    dir.finish(if failures.is_empty() { "pass" } else { "fail" })?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Assertions(failures))
    }
}
