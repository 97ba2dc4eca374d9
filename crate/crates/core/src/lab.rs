//! Empirical bias and variance of the pool estimators against exact oracles.
//!
//! Replicate `r` draws its pool (and PAFT resampling) from the stream derived
//! from `(seed, "replicate", r)`, so reports are independent of thread count.
//! Confidence half-widths are `z * se` with `se` the bootstrap standard error of
//! the replicate mean and `z` the two-sided normal quantile at level
//! `1 - (1 - level) / n_coords`, making the intervals simultaneous over
//! coordinates.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::csvio::{fmt_f64, write_table, CsvMeta};
use crate::error::{Error, Result};
use crate::estimators::{
    garl_plugin, garl_rloo, paft, paft_conditional_mean, predicted_bias, EstimatorTag, SamplePool,
};
use crate::models::{exact_grad_loss, sample_prior, Example, LatentSeqModel, Model};
use crate::numeric::{mean, variance};
use crate::qcore::QParam;
use crate::rng::Stream;

/// Largest tolerated fraction of degenerate pools.
pub const MAX_DEGENERATE_FRACTION: f64 = 0.01;
/// Absolute floor added to every half-width; covers summation roundoff on
/// coordinates whose estimates are constant.
pub const CI_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabOptions {
    pub replicates: usize,
    pub bootstrap: usize,
    pub level: f64,
    /// PAFT resample count; `None` means `K = M`.
    pub k: Option<usize>,
}

impl Default for LabOptions {
    fn default() -> Self {
        Self {
            replicates: 1000,
            bootstrap: 1000,
            level: 0.95,
            k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Flag {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Flag {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            pass,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasVarReport {
    pub tag: String,
    pub q: f64,
    pub m: usize,
    pub replicates: usize,
    pub degenerate: usize,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub exact: Vec<f64>,
    pub predicted_bias: Vec<f64>,
    /// Bootstrap standard error of `mean`.
    pub se: Vec<f64>,
    pub ci_half: Vec<f64>,
    pub flags: Vec<Flag>,
}

impl BiasVarReport {
    pub fn bias(&self) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.exact)
            .map(|(m, e)| m - e)
            .collect()
    }

    pub fn all_pass(&self) -> bool {
        self.flags.iter().all(|f| f.pass)
    }

    pub fn write_csv(&self, path: &Path, meta: &CsvMeta) -> Result<()> {
        let bias = self.bias();
        let rows: Vec<Vec<String>> = (0..self.mean.len())
            .map(|i| {
                vec![
                    i.to_string(),
                    fmt_f64(self.mean[i]),
                    fmt_f64(self.variance[i]),
                    fmt_f64(self.exact[i]),
                    fmt_f64(bias[i]),
                    fmt_f64(self.predicted_bias[i]),
                    fmt_f64(self.se[i]),
                    fmt_f64(self.ci_half[i]),
                ]
            })
            .collect();
        write_table(
            path,
            meta,
            &[
                "coord",
                "mean",
                "variance",
                "exact",
                "bias",
                "predicted_bias",
                "se",
                "ci_half",
            ],
            &rows,
        )
    }
}

/// Simultaneous two-sided normal quantile over `n` coordinates.
pub fn simultaneous_z(level: f64, n: usize) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) || n == 0 {
        return Err(Error::Domain(format!(
            "confidence level {level} over {n} coordinates"
        )));
    }
    let alpha = (1.0 - level) / n as f64;
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(1.0 - alpha / 2.0))
}

/// Row-major `rows x n` sample matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Samples {
    pub fn rows(&self) -> usize {
        self.data.len().checked_div(self.n).unwrap_or(0)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n..(r + 1) * self.n]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.rows())
            .map(|r| self.data[r * self.n + i])
            .collect()
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.n).map(|i| mean(&self.column(i))).collect()
    }

    pub fn variances(&self) -> Vec<f64> {
        (0..self.n).map(|i| variance(&self.column(i))).collect()
    }

    /// Row-wise `self - other`.
    pub fn minus(&self, other: &Samples) -> Samples {
        debug_assert_eq!(self.data.len(), other.data.len());
        Samples {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    fn from_rows(n: usize, rows: Vec<Vec<f64>>) -> Samples {
        Samples {
            n,
            data: rows.into_iter().flatten().collect(),
        }
    }
}

/// Bootstrap standard error of the column means: `resamples` resamples of
/// the rows with replacement, resample `b` drawn from `(seed, "bootstrap", b)`.
pub fn bootstrap_se(samples: &Samples, resamples: usize, seed: u64) -> Result<Vec<f64>> {
    let rows = samples.rows();
    if rows < 2 || resamples < 2 {
        return Err(Error::Empty(
            "bootstrap needs at least two rows and two resamples",
        ));
    }
    let n = samples.n;
    let means: Vec<Vec<f64>> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut s = Stream::derive(seed, "bootstrap", b as u64);
            let mut acc = vec![0.0; n];
            for _ in 0..rows {
                let r = ((s.uniform() * rows as f64) as usize).min(rows - 1);
                for (a, v) in acc.iter_mut().zip(samples.row(r)) {
                    *a += v;
                }
            }
            acc.iter_mut().for_each(|a| *a /= rows as f64);
            acc
        })
        .collect();
    Ok((0..n)
        .map(|i| {
            let col: Vec<f64> = means.iter().map(|m| m[i]).collect();
            variance(&col).sqrt()
        })
        .collect())
}

/// One raw (un-normalized) estimate from `pool`.
pub fn estimate(
    tag: EstimatorTag,
    pool: &SamplePool,
    q: QParam,
    k: usize,
    stream: &mut Stream,
) -> Result<Vec<f64>> {
    let out = match tag {
        EstimatorTag::Plugin => garl_plugin(pool, q)?,
        EstimatorTag::Rloo => garl_rloo(pool, q)?,
        EstimatorTag::Paft => paft(pool, q, k, stream)?,
        EstimatorTag::PaftConditional => paft_conditional_mean(pool, q)?,
    };
    Ok(out.grad.values)
}

fn is_degenerate_err(e: &Error) -> bool {
    matches!(e, Error::DegeneratePool(_) | Error::ParticleDegeneracy(_))
}

/// Per replicate, one pool and the estimates of every tag in `tags`;
/// degenerate pools yield `None`.
fn run_replicates(
    model: &LatentSeqModel,
    ex: &Example,
    tags: &[EstimatorTag],
    q: QParam,
    m: usize,
    opts: &LabOptions,
    seed: u64,
) -> Result<Vec<Option<Vec<Vec<f64>>>>> {
    model.check_example(ex)?;
    let k = opts.k.unwrap_or(m);
    (0..opts.replicates)
        .into_par_iter()
        .map(|r| {
            let mut s = Stream::derive(seed, "replicate", r as u64);
            let pool = sample_prior(model, ex, m, &mut s)?;
            let mut out = Vec::with_capacity(tags.len());
            for &tag in tags {
                match estimate(tag, &pool, q, k, &mut s) {
                    Ok(v) => out.push(v),
                    Err(e) if is_degenerate_err(&e) => return Ok(None),
                    Err(e) => return Err(e),
                }
            }
            Ok(Some(out))
        })
        .collect()
}

fn degenerate_flag(degenerate: usize, total: usize) -> Flag {
    let frac = degenerate as f64 / total as f64;
    Flag::new(
        "degenerate-pools",
        frac <= MAX_DEGENERATE_FRACTION,
        format!("{degenerate}/{total} pools degenerate"),
    )
}

fn check_replicates(opts: &LabOptions) -> Result<()> {
    if opts.replicates < 2 {
        return Err(Error::Empty("at least two replicates are needed"));
    }
    Ok(())
}

/// Empirical mean and variance of one estimator over `R` independent pools,
/// against the exact gradient and the leading-order bias prediction.
///
/// Flags: degenerate-pool fraction, and for `q = 0` or the RLOO estimator at
/// `q = 0` the simultaneous CI containing the exact gradient.
pub fn measure_bias_variance(
    model: &LatentSeqModel,
    ex: &Example,
    tag: EstimatorTag,
    q: QParam,
    m: usize,
    opts: &LabOptions,
    seed: u64,
) -> Result<BiasVarReport> {
    check_replicates(opts)?;
    let reps = run_replicates(model, ex, &[tag], q, m, opts, seed)?;
    let n = model.num_params();
    let degenerate = reps.iter().filter(|r| r.is_none()).count();
    let rows: Vec<Vec<f64>> = reps
        .into_iter()
        .flatten()
        .map(|mut v| v.remove(0))
        .collect();
    if rows.len() < 2 {
        return Err(Error::DegeneratePool(m));
    }
    let samples = Samples::from_rows(n, rows);
    let exact = exact_grad_loss(model, ex, q)?.values;
    let predicted = predicted_bias(model, ex, q, m)?.values;
    let se = bootstrap_se(&samples, opts.bootstrap, seed)?;
    let z = simultaneous_z(opts.level, n)?;
    let ci_half: Vec<f64> = se.iter().map(|s| z * s + CI_FLOOR).collect();
    let mean = samples.means();
    let mut flags = vec![degenerate_flag(degenerate, opts.replicates)];
    if q.get() == 0.0 && tag != EstimatorTag::Paft {
        let worst = worst_excess(&mean, &exact, &ci_half);
        flags.push(Flag::new(
            "unbiased",
            worst <= 1.0,
            format!("max |bias|/ci_half = {worst:.3}"),
        ));
    }
    Ok(BiasVarReport {
        tag: tag.as_str().into(),
        q: q.get(),
        m,
        replicates: opts.replicates,
        degenerate,
        variance: samples.variances(),
        mean,
        exact,
        predicted_bias: predicted,
        se,
        ci_half,
        flags,
    })
}

/// `max_i |a_i - b_i| / h_i`.
fn worst_excess(a: &[f64], b: &[f64], h: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(h)
        .map(|((x, y), w)| (x - y).abs() / w)
        .fold(0.0, f64::max)
}

/// Paired comparison of two estimators on shared pools.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedDiff {
    pub a: String,
    pub b: String,
    /// Mean of `a - b`.
    pub mean_diff: Vec<f64>,
    pub ci_half: Vec<f64>,
    pub var_a: Vec<f64>,
    pub var_b: Vec<f64>,
}

impl PairedDiff {
    /// Simultaneous CI of the mean difference contains zero.
    pub fn zero_in_ci(&self) -> bool {
        self.worst_excess() <= 1.0
    }

    pub fn worst_excess(&self) -> f64 {
        worst_excess(
            &self.mean_diff,
            &vec![0.0; self.mean_diff.len()],
            &self.ci_half,
        )
    }

    /// Fraction of coordinates with `Var(a) >= Var(b)`.
    pub fn variance_dominance(&self) -> f64 {
        let hits = self
            .var_a
            .iter()
            .zip(&self.var_b)
            .filter(|(a, b)| a >= b)
            .count();
        hits as f64 / self.var_a.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedReport {
    pub q: f64,
    pub m: usize,
    pub k: usize,
    pub replicates: usize,
    pub degenerate: usize,
    pub rloo_vs_plugin: PairedDiff,
    pub paft_vs_plugin: PairedDiff,
    /// Largest per-pool `|E[paft | pool] - plugin|` over all coordinates.
    pub tower_max_abs: f64,
    pub flags: Vec<Flag>,
}

impl PairedReport {
    pub fn all_pass(&self) -> bool {
        self.flags.iter().all(|f| f.pass)
    }
}

/// Required fraction of coordinates with `Var(paft) >= Var(plugin)`.
pub const VARIANCE_DOMINANCE: f64 = 0.95;
/// Bound on the per-pool tower identity residual.
pub const TOWER_TOL: f64 = 1e-12;

/// Plug-in, RLOO, PAFT and the PAFT conditional mean on each shared pool.
pub fn compare_estimators(
    model: &LatentSeqModel,
    ex: &Example,
    q: QParam,
    m: usize,
    opts: &LabOptions,
    seed: u64,
) -> Result<PairedReport> {
    use EstimatorTag::*;
    check_replicates(opts)?;
    let tags = [Plugin, Rloo, Paft, PaftConditional];
    let reps = run_replicates(model, ex, &tags, q, m, opts, seed)?;
    let n = model.num_params();
    let degenerate = reps.iter().filter(|r| r.is_none()).count();
    let kept: Vec<Vec<Vec<f64>>> = reps.into_iter().flatten().collect();
    if kept.len() < 2 {
        return Err(Error::DegeneratePool(m));
    }
    let column = |j: usize| Samples::from_rows(n, kept.iter().map(|r| r[j].clone()).collect());
    let (plugin, rloo, pf) = (column(0), column(1), column(2));
    let tower_max_abs = kept
        .iter()
        .flat_map(|r| r[3].iter().zip(&r[0]).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    let z = simultaneous_z(opts.level, n)?;
    let paired = |a: &Samples, b: &Samples, an: EstimatorTag, stream: u64| -> Result<PairedDiff> {
        let d = a.minus(b);
        let se = bootstrap_se(
            &d,
            opts.bootstrap,
            crate::rng::derive_seed(seed, "paired", stream),
        )?;
        Ok(PairedDiff {
            a: an.as_str().into(),
            b: Plugin.as_str().into(),
            mean_diff: d.means(),
            ci_half: se.iter().map(|s| z * s + CI_FLOOR).collect(),
            var_a: a.variances(),
            var_b: b.variances(),
        })
    };
    let rloo_vs_plugin = paired(&rloo, &plugin, Rloo, 0)?;
    let paft_vs_plugin = paired(&pf, &plugin, Paft, 1)?;
    let flags = vec![
        degenerate_flag(degenerate, opts.replicates),
        Flag::new(
            "rloo-plugin-mean",
            rloo_vs_plugin.zero_in_ci(),
            format!("max |diff|/ci_half = {:.3}", rloo_vs_plugin.worst_excess()),
        ),
        Flag::new(
            "paft-plugin-mean",
            paft_vs_plugin.zero_in_ci(),
            format!("max |diff|/ci_half = {:.3}", paft_vs_plugin.worst_excess()),
        ),
        Flag::new(
            "paft-variance",
            paft_vs_plugin.variance_dominance() >= VARIANCE_DOMINANCE,
            format!(
                "Var(paft) >= Var(plugin) on {:.4} of coordinates",
                paft_vs_plugin.variance_dominance()
            ),
        ),
        Flag::new(
            "paft-tower",
            tower_max_abs <= TOWER_TOL,
            format!("max per-pool residual {tower_max_abs:e}"),
        ),
    ];
    Ok(PairedReport {
        q: q.get(),
        m,
        k: opts.k.unwrap_or(m),
        replicates: opts.replicates,
        degenerate,
        rloo_vs_plugin,
        paft_vs_plugin,
        tower_max_abs,
        flags,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EssProfile {
    pub m: usize,
    /// Sorted ascending.
    pub ess: Vec<f64>,
    pub degenerate: usize,
}

impl EssProfile {
    pub fn median(&self) -> f64 {
        let n = self.ess.len();
        if n == 0 {
            return f64::NAN;
        }
        if n % 2 == 1 {
            self.ess[n / 2]
        } else {
            0.5 * (self.ess[n / 2 - 1] + self.ess[n / 2])
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        if self.ess.is_empty() {
            return f64::NAN;
        }
        let i = ((p.clamp(0.0, 1.0) * (self.ess.len() - 1) as f64).round()) as usize;
        self.ess[i]
    }
}

/// Effective sample size of `R` independent prior pools of size `M`.
pub fn ess_profile(
    model: &LatentSeqModel,
    ex: &Example,
    m: usize,
    replicates: usize,
    seed: u64,
) -> Result<EssProfile> {
    model.check_example(ex)?;
    let mut ess: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut s = Stream::derive(seed, "ess", r as u64);
            Ok(sample_prior(model, ex, m, &mut s)?.ess())
        })
        .collect::<Result<_>>()?;
    let degenerate = ess.iter().filter(|&&e| e == 0.0).count();
    ess.sort_by(f64::total_cmp);
    Ok(EssProfile { m, ess, degenerate })
}

/// Weighted least-squares fit of `bias(M) = a / M + b / M^2` per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasLawFit {
    pub ms: Vec<usize>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub se_a: Vec<f64>,
    /// Predicted leading coefficient, `M * predicted_bias(M)`.
    pub a_predicted: Vec<f64>,
    /// `max_i |a_i - a_pred_i| / se_a_i`.
    pub worst_z: f64,
}

impl BiasLawFit {
    pub fn pass(&self, n_se: f64) -> bool {
        self.worst_z <= n_se
    }
}

/// Fit the bias law over reports of one estimator at several `M`; weights
/// are the inverse squared bootstrap standard errors.
pub fn fit_bias_law(reports: &[BiasVarReport]) -> Result<BiasLawFit> {
    if reports.len() < 3 {
        return Err(Error::InsufficientGrid(
            "bias law fit needs at least three pool sizes".into(),
        ));
    }
    let n = reports[0].mean.len();
    if reports
        .iter()
        .any(|r| r.mean.len() != n || r.tag != reports[0].tag || r.q != reports[0].q)
    {
        return Err(Error::Shape(
            "bias law reports must share estimator, q and dimension".into(),
        ));
    }
    let m0 = reports[0].m as f64;
    let a_predicted: Vec<f64> = reports[0].predicted_bias.iter().map(|p| p * m0).collect();
    let biases: Vec<Vec<f64>> = reports.iter().map(|r| r.bias()).collect();
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut se_a = vec![0.0; n];
    for i in 0..n {
        // normal equations of the 2x2 weighted problem
        let (mut s11, mut s12, mut s22, mut t1, mut t2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (r, bias) in reports.iter().zip(&biases) {
            let x1 = 1.0 / r.m as f64;
            let x2 = x1 * x1;
            // constant coordinates (se = 0) would get infinite weight
            let w = 1.0 / r.se[i].max(CI_FLOOR).powi(2);
            s11 += w * x1 * x1;
            s12 += w * x1 * x2;
            s22 += w * x2 * x2;
            t1 += w * x1 * bias[i];
            t2 += w * x2 * bias[i];
        }
        let det = s11 * s22 - s12 * s12;
        if !(det > 0.0) {
            return Err(Error::Numerical(format!(
                "singular bias law fit at coordinate {i}"
            )));
        }
        a[i] = (s22 * t1 - s12 * t2) / det;
        b[i] = (s11 * t2 - s12 * t1) / det;
        se_a[i] = (s22 / det).sqrt();
    }
    let worst_z = worst_excess(&a, &a_predicted, &se_a);
    Ok(BiasLawFit {
        ms: reports.iter().map(|r| r.m).collect(),
        a,
        b,
        se_a,
        a_predicted,
        worst_z,
    })
}

/// Pretty JSON summary with every flag.
pub fn summary_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numerical(format!("summary serialization: {e}")))
}
