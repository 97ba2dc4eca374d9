use clap::{Args, ValueEnum};

use super::{CmdResult, Failure, Floats, OutArgs, RunDir};
use crate::csvio::{fmt_f64, write_table};
use crate::dynamics::{
    check_fit_grid, exact_sigmoid_time, fit_escape_exponent, integrate_noise_flow,
    integrate_sigmoid_flow, near_optimality_ratio, noise_equilibrium, write_noise_trace,
    write_sweep, write_trace, EscapeFit, SweepRow,
};
use crate::qcore::{QParam, SuccessProb};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Escape,
    Noise,
    NearOpt,
}

#[derive(Debug, Args)]
pub struct DynamicsArgs {
    #[arg(long, value_enum)]
    pub kind: Kind,
    /// q values.
    #[arg(long, default_value = "0,0.25,0.5,0.75,1")]
    pub q: Floats,
    /// Starting success probabilities of the escape sweep.
    #[arg(long, default_value = "1e-2,1e-3,1e-4,1e-5,1e-6,1e-7")]
    pub p0: Floats,
    /// Escape target probability.
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    /// Label noise rate, in (0, 1/2).
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    /// Contamination target [default: a tenth of the equilibrium at each q,
    /// a tenth of eps at q = 0]
    #[arg(long)]
    pub eta: Option<f64>,
    /// Starting contaminations as multiples of eta [default: the p0 grid over delta]
    #[arg(long)]
    pub ptilde0: Option<Floats>,
    /// Comparison q of the near-optimality ratio.
    #[arg(long, default_value_t = 1.0)]
    pub q2: f64,
    /// Upper contamination levels of the near-optimality ratio; the lower
    /// level is a tenth of each.
    #[arg(long, default_value = "1e-2,1e-3,1e-4")]
    pub eps0: Floats,
    /// Time budget of each integration.
    #[arg(long, default_value_t = 1e12)]
    pub budget: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

impl DynamicsArgs {
    fn snapshot(&self) -> String {
        let common = format!(
            "kind={:?} q={:?} budget={}",
            self.kind, self.q.0, self.budget
        );
        let rest = match self.kind {
            Kind::Escape => format!("p0={:?} delta={}", self.p0.0, self.delta),
            Kind::Noise => format!(
                "eps={} eta={:?} ptilde0={:?} p0={:?} delta={}",
                self.eps,
                self.eta,
                self.ptilde0.as_ref().map(|f| &f.0),
                self.p0.0,
                self.delta
            ),
            Kind::NearOpt => format!("q2={} eps0={:?}", self.q2, self.eps0.0),
        };
        format!("dynamics {common} {rest}")
    }
}

fn tag(v: f64) -> String {
    format!("{v:e}")
}

fn check_grid(name: &str, grid: &[f64], min_len: usize) -> Result<(), Failure> {
    if grid.len() < min_len {
        return Err(Failure::Usage(format!(
            "--{name} needs at least {min_len} values, got {}",
            grid.len()
        )));
    }
    Ok(())
}

fn check_fit(name: &str, grid: &[f64]) -> Result<(), Failure> {
    check_fit_grid(grid).map_err(|e| Failure::Usage(format!("--{name}: {e}")))
}

/// Everything checkable before a run directory is allocated.
fn validate(a: &DynamicsArgs) -> Result<(), Failure> {
    check_grid("q", &a.q.0, 1)?;
    for &q in &a.q.0 {
        QParam::new(q)?;
    }
    match a.kind {
        Kind::Escape => {
            SuccessProb::new(a.delta)?;
            if a.p0.0.iter().any(|&p| !(p > 0.0 && p < a.delta)) {
                return Err(Failure::Usage(format!(
                    "every --p0 must lie in (0, delta = {})",
                    a.delta
                )));
            }
            check_fit("p0", &a.p0.0)
        }
        Kind::Noise => {
            if !(a.eps > 0.0 && a.eps < 0.5) {
                return Err(Failure::Usage(format!(
                    "--eps must lie in (0, 1/2), got {}",
                    a.eps
                )));
            }
            // starts are multiples of eta, so their spread does not depend on q
            match &a.ptilde0 {
                Some(m) => check_fit("ptilde0", &m.0),
                None => check_fit("p0", &a.p0.0),
            }
        }
        Kind::NearOpt => {
            QParam::new(a.q2)?;
            check_grid("eps0", &a.eps0.0, 1)
        }
    }
}

pub fn run(a: &DynamicsArgs) -> CmdResult {
    validate(a)?;
    let mut dir = RunDir::create("dynamics", &a.snapshot(), &a.out)?;
    match a.kind {
        Kind::Escape => escape(a, &mut dir)?,
        Kind::Noise => noise(a, &mut dir)?,
        Kind::NearOpt => near_opt(a, &mut dir)?,
    }
    dir.finish("completed")?;
    Ok(())
}

fn escape(a: &DynamicsArgs, dir: &mut RunDir) -> CmdResult {
    let delta = SuccessProb::new(a.delta)?;
    let mut rows = Vec::new();
    let mut fits: Vec<(f64, EscapeFit)> = Vec::new();
    for &q in &a.q.0 {
        let qp = QParam::new(q)?;
        let mut times = Vec::new();
        let (mut series, mut quad) = (Vec::new(), Vec::new());
        for &p0 in &a.p0.0 {
            let tr = integrate_sigmoid_flow(qp, SuccessProb::new(p0)?, delta, a.budget)?;
            write_trace(
                &dir.file(&format!("trace_q={}_p0={}.csv", tag(q), tag(p0)))?,
                dir.meta(),
                &tr,
            )?;
            let t = tr.crossing(a.delta);
            let exact = exact_sigmoid_time(qp, SuccessProb::new(p0)?, delta)?;
            rows.push(SweepRow {
                q,
                p0,
                eps: None,
                t,
                status: tr.status.as_str().into(),
            });
            quad.push(vec![fmt_f64(p0), fmt_f64(exact)]);
            if let Some(t) = t {
                series.push(vec![fmt_f64(p0), fmt_f64(t)]);
                times.push((p0, t));
            }
        }
        write_table(
            &dir.file(&format!("plot/escape_q={}.csv", tag(q)))?,
            dir.meta(),
            &["p0", "T"],
            &series,
        )?;
        write_table(
            &dir.file(&format!("plot/escape_quadrature_q={}.csv", tag(q)))?,
            dir.meta(),
            &["p0", "T"],
            &quad,
        )?;
        if times.len() == a.p0.0.len() {
            let (g, t): (Vec<f64>, Vec<f64>) = times.into_iter().unzip();
            let fit = fit_escape_exponent(qp, &g, &t)?;
            println!(
                "q = {q}: {:?} fit slope {:.4}, r2 {:.6}",
                fit.kind, fit.slope, fit.r2
            );
            fits.push((q, fit));
        } else {
            println!("q = {q}: not every start crossed delta within the budget; no fit");
        }
    }
    write_sweep(&dir.file("sweep.csv")?, dir.meta(), &rows, &fits)?;
    Ok(())
}

fn noise(a: &DynamicsArgs, dir: &mut RunDir) -> CmdResult {
    let mut rows = Vec::new();
    let mut fits: Vec<(f64, EscapeFit)> = Vec::new();
    for &q in &a.q.0 {
        let qp = QParam::new(q)?;
        let eta = match a.eta {
            Some(e) => e,
            None if q == 0.0 => 0.1 * a.eps,
            None => 0.1 * noise_equilibrium(qp, a.eps)?,
        };
        let starts: Vec<f64> = match &a.ptilde0 {
            Some(m) => m.0.iter().map(|v| v * eta).collect(),
            None => a.p0.0.iter().map(|p| eta * p / a.delta).collect(),
        };
        let mut series = Vec::new();
        let mut times = Vec::new();
        for &pt0 in &starts {
            let tr = integrate_noise_flow(
                qp,
                a.eps,
                SuccessProb::new(pt0)?,
                SuccessProb::new(eta)?,
                a.budget,
            )?;
            write_noise_trace(
                &dir.file(&format!("trace_q={}_pt0={}.csv", tag(q), tag(pt0)))?,
                dir.meta(),
                &tr,
            )?;
            let status = if tr.crossing.is_some() {
                tr.status.as_str().to_string()
            } else {
                "no-crossing".into()
            };
            rows.push(SweepRow {
                q,
                p0: pt0,
                eps: Some(a.eps),
                t: tr.crossing,
                status,
            });
            if let Some(t) = tr.crossing {
                series.push(vec![fmt_f64(pt0), fmt_f64(t)]);
                times.push((pt0, t));
            }
        }
        write_table(
            &dir.file(&format!("plot/noise_q={}.csv", tag(q)))?,
            dir.meta(),
            &["ptilde0", "T"],
            &series,
        )?;
        if times.len() == starts.len() {
            let (g, t): (Vec<f64>, Vec<f64>) = times.into_iter().unzip();
            let fit = fit_escape_exponent(qp, &g, &t)?;
            println!(
                "q = {q}: eta {eta:.3e}, {:?} fit slope {:.4}, r2 {:.6}",
                fit.kind, fit.slope, fit.r2
            );
            fits.push((q, fit));
        } else {
            println!("q = {q}: eta {eta:.3e}, no crossing");
        }
    }
    write_sweep(&dir.file("sweep.csv")?, dir.meta(), &rows, &fits)?;
    Ok(())
}

fn near_opt(a: &DynamicsArgs, dir: &mut RunDir) -> CmdResult {
    let q2 = QParam::new(a.q2)?;
    let mut rows = Vec::new();
    for &q in &a.q.0 {
        let mut series = Vec::new();
        for &e0 in &a.eps0.0 {
            let r = near_optimality_ratio(QParam::new(q)?, q2, e0, e0 / 10.0)?;
            rows.push(vec![
                fmt_f64(q),
                fmt_f64(a.q2),
                fmt_f64(e0),
                fmt_f64(e0 / 10.0),
                fmt_f64(r),
            ]);
            series.push(vec![fmt_f64(e0), fmt_f64(r)]);
        }
        write_table(
            &dir.file(&format!("plot/near_opt_q={}.csv", tag(q)))?,
            dir.meta(),
            &["eps0", "ratio"],
            &series,
        )?;
    }
    write_table(
        &dir.file("near_opt.csv")?,
        dir.meta(),
        &["q", "q2", "eps0", "eps1", "ratio"],
        &rows,
    )?;
    Ok(())
}
