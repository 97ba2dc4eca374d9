//! Gradient-flow dynamics of the success probability.
//!
//! Clean flows follow `p' = p^(2-q) |s|^2`; on the sigmoid `|s|^2 = (1-p)^2`.
//! Noise flows follow the contamination `pt = 1 - p` under a label flipped
//! with rate `eps`. Both are integrated in log-probability coordinates so the
//! absolute tolerance acts as a relative tolerance on tiny probabilities.

mod export;
pub mod ode;

pub use export::{write_noise_trace, write_sweep, write_trace, SweepRow};

use crate::error::{Error, Result};
use crate::models::{Example, Model};
use crate::numeric::{brent_root, fit_line, integrate as quad};
use crate::qcore::{QParam, SuccessProb};
use ode::{integrate, Control, OdeOptions};

/// Relative tolerance of the escape-time quadrature.
pub const QUAD_RTOL: f64 = 1e-8;
/// Derivative magnitude below which a noise flow step counts as stalled.
pub const EQUILIBRIUM_DERIVATIVE: f64 = 1e-14;
/// Consecutive stalled steps that declare an equilibrium.
pub const EQUILIBRIUM_STEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceStatus {
    ReachedTarget,
    BudgetExhausted,
    Equilibrium,
}

impl TraceStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceStatus::ReachedTarget => "reached-target",
            TraceStatus::BudgetExhausted => "budget-exhausted",
            TraceStatus::Equilibrium => "equilibrium",
        }
    }
}

/// First time a trace reaches `level`; `None` if it never does.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub level: f64,
    pub time: Option<f64>,
}

/// Success probability over time under a clean flow.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsTrace {
    pub q: f64,
    pub t: Vec<f64>,
    pub p: Vec<f64>,
    /// `p^(2-q) |s|^2` at each recorded point.
    pub pdot_predicted: Vec<f64>,
    pub status: TraceStatus,
    pub crossings: Vec<Crossing>,
}

impl DynamicsTrace {
    /// Finite-difference slope between consecutive points; backward at the end.
    pub fn pdot_measured(&self) -> Vec<f64> {
        let n = self.t.len();
        (0..n)
            .map(|i| {
                let (a, b) = if i + 1 < n {
                    (i, i + 1)
                } else if n >= 2 {
                    (n - 2, n - 1)
                } else {
                    return f64::NAN;
                };
                (self.p[b] - self.p[a]) / (self.t[b] - self.t[a])
            })
            .collect()
    }

    pub fn crossing(&self, level: f64) -> Option<f64> {
        self.crossings
            .iter()
            .find(|c| c.level == level)
            .and_then(|c| c.time)
    }
}

/// Contamination over time under a noise flow.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrace {
    pub q: f64,
    pub eps: f64,
    pub eta: f64,
    pub t: Vec<f64>,
    pub ptilde: Vec<f64>,
    pub status: TraceStatus,
    /// Last value when an equilibrium was detected.
    pub equilibrium: Option<f64>,
    pub crossing: Option<f64>,
}

fn sigmoid_pdot(q: f64, p: f64) -> f64 {
    p.powf(2.0 - q) * (1.0 - p).powi(2)
}

/// Integrate the sigmoid flow from `p0` until `delta` is crossed or `budget`
/// time has elapsed. The crossing time is interpolated on the accepted step.
pub fn integrate_sigmoid_flow(
    q: QParam,
    p0: SuccessProb,
    delta: SuccessProb,
    budget: f64,
) -> Result<DynamicsTrace> {
    let (p0, delta, qq) = (p0.get(), delta.get(), q.get());
    if !(p0 < delta && delta <= 0.5) {
        return Err(Error::Domain(format!(
            "need 0 < p0 < delta <= 1/2, got p0 = {p0}, delta = {delta}"
        )));
    }
    if !(budget > 0.0) {
        return Err(Error::Domain(format!(
            "time budget must be positive, got {budget}"
        )));
    }
    // d ln p / dt = p^(1-q) (1-p)^2
    let rhs = |_: f64, s: f64| {
        let p = s.exp();
        (s * (1.0 - qq)).exp() * (1.0 - p).powi(2)
    };
    let level = delta.ln();
    let mut t = vec![0.0];
    let mut p = vec![p0];
    let mut hit = None;
    let end = integrate(rhs, 0.0, p0.ln(), budget, OdeOptions::default(), |st| {
        if let Some(tc) = st.crossing(level) {
            hit = Some(tc);
            t.push(tc);
            p.push(delta);
            return Control::Halt;
        }
        t.push(st.t1);
        p.push(st.y1.exp());
        Control::Continue
    })?;
    let status = if end.halted {
        TraceStatus::ReachedTarget
    } else {
        TraceStatus::BudgetExhausted
    };
    let pdot_predicted = p.iter().map(|&v| sigmoid_pdot(qq, v)).collect();
    Ok(DynamicsTrace {
        q: qq,
        t,
        p,
        pdot_predicted,
        status,
        crossings: vec![Crossing {
            level: delta,
            time: hit,
        }],
    })
}

/// `T_q = int_{p0}^{delta} du / (u^(2-q) (1-u)^2)` by adaptive quadrature in `ln u`.
pub fn exact_sigmoid_time(q: QParam, p0: SuccessProb, delta: SuccessProb) -> Result<f64> {
    let (p0, delta, qq) = (p0.get(), delta.get(), q.get());
    if !(p0 <= delta && delta < 1.0) {
        return Err(Error::Domain(format!(
            "need 0 < p0 <= delta < 1, got p0 = {p0}, delta = {delta}"
        )));
    }
    if p0 == delta {
        return Ok(0.0);
    }
    let f = |s: f64| (-(1.0 - qq) * s).exp() / s.exp_m1().powi(2);
    quad(f, p0.ln(), delta.ln(), QUAD_RTOL, 0.0)
}

/// Lower bound `int_{p0}^{delta} u^-(2-q) du` valid for any score with `|s|^2 <= 1`.
pub fn escape_lower_bound(q: QParam, p0: f64, delta: f64) -> f64 {
    let a = 1.0 - q.get();
    if a == 0.0 {
        (delta / p0).ln()
    } else {
        (p0.powf(-a) - delta.powf(-a)) / a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitKind {
    /// `log T` against `log(1/p0)`.
    PowerLaw,
    /// `T` against `log(1/p0)`.
    Logarithmic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscapeFit {
    pub kind: FitKind,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Fewest starting points an exponent fit accepts.
pub const FIT_MIN_POINTS: usize = 4;
/// Smallest span of starting points, in decades, an exponent fit accepts.
pub const FIT_MIN_DECADES: f64 = 3.0;

/// Reject starting grids an exponent fit cannot use: too few points,
/// non-positive values or a span under [`FIT_MIN_DECADES`].
pub fn check_fit_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < FIT_MIN_POINTS {
        return Err(Error::InsufficientGrid(format!(
            "need >= {FIT_MIN_POINTS} points, got {}",
            grid.len()
        )));
    }
    if grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InsufficientGrid(
            "grid points must be positive and finite".into(),
        ));
    }
    let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().copied().fold(0.0, f64::max);
    if (hi / lo).log10() < FIT_MIN_DECADES - 1e-9 {
        return Err(Error::InsufficientGrid(format!(
            "grid spans {:.2} decades, need {FIT_MIN_DECADES}",
            (hi / lo).log10()
        )));
    }
    Ok(())
}

fn check_grid(grid: &[f64], times: &[f64]) -> Result<()> {
    if grid.len() != times.len() {
        return Err(Error::Shape(format!(
            "{} grid points vs {} times",
            grid.len(),
            times.len()
        )));
    }
    check_fit_grid(grid)?;
    if times.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InsufficientGrid(
            "times must be positive and finite".into(),
        ));
    }
    Ok(())
}

/// Fit escape times against the starting probability: a power law for q < 1,
/// a logarithmic law at q = 1.
pub fn fit_escape_exponent(q: QParam, p0_grid: &[f64], times: &[f64]) -> Result<EscapeFit> {
    check_grid(p0_grid, times)?;
    let x: Vec<f64> = p0_grid.iter().map(|p| (1.0 / p).ln()).collect();
    if q.get() == 1.0 {
        let f = fit_line(&x, times)?;
        return Ok(EscapeFit {
            kind: FitKind::Logarithmic,
            slope: f.slope,
            intercept: f.intercept,
            r2: f.r2,
        });
    }
    let y: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let f = fit_line(&x, &y)?;
    Ok(EscapeFit {
        kind: FitKind::PowerLaw,
        slope: f.slope,
        intercept: f.intercept,
        r2: f.r2,
    })
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::Domain(format!(
            "noise rate must lie in (0, 1/2), got {eps}"
        )));
    }
    Ok(())
}

/// Stable equilibrium of the noise flow, found by root-finding
/// `eps pt^-q = (1-eps) (1-pt)^-q` in `ln pt`.
pub fn noise_equilibrium(q: QParam, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let qq = q.get();
    if qq == 0.0 {
        return Err(Error::Domain(
            "the q = 0 noise flow has no interior equilibrium".into(),
        ));
    }
    let g = |s: f64| eps.ln() - (1.0 - eps).ln() - qq * s + qq * (-s.exp()).ln_1p();
    let s = brent_root(g, -740.0, 0.5f64.ln(), 1e-14, 500)?;
    Ok(s.exp())
}

/// `d ln pt / dt` for the noise flow.
fn noise_log_rate(q: f64, eps: f64, s: f64) -> f64 {
    let pt = s.exp();
    let p = -s.exp_m1();
    if q == 0.0 {
        return -(1.0 - 2.0 * eps) * p * p * pt;
    }
    (eps * (s * (1.0 - q)).exp() - (1.0 - eps) * p.powf(-q) * pt) * p * p
}

/// Integrate the noise flow from `ptilde0` until `eta` is crossed, an
/// equilibrium is detected, or `budget` time has elapsed.
pub fn integrate_noise_flow(
    q: QParam,
    eps: f64,
    ptilde0: SuccessProb,
    eta: SuccessProb,
    budget: f64,
) -> Result<NoiseTrace> {
    check_eps(eps)?;
    let (pt0, eta, qq) = (ptilde0.get(), eta.get(), q.get());
    if !(pt0 < eta && eta < 1.0) {
        return Err(Error::Domain(format!(
            "need 0 < ptilde0 < eta < 1, got {pt0}, {eta}"
        )));
    }
    // Stalls only count at or above half the equilibrium: far below it the
    // flow is slow in absolute terms yet still climbing.
    let mut stall_floor = 0.0;
    if qq > 0.0 {
        let star = noise_equilibrium(q, eps)?;
        if eta > star {
            return Err(Error::UnreachableTarget {
                target: eta,
                reason: format!("equilibrium contamination is {star}"),
            });
        }
        stall_floor = 0.5 * star;
    }
    if !(budget > 0.0) {
        return Err(Error::Domain(format!(
            "time budget must be positive, got {budget}"
        )));
    }
    let level = eta.ln();
    let mut t = vec![0.0];
    let mut pt = vec![pt0];
    let mut crossing = None;
    let mut stalled = 0usize;
    let mut at_equilibrium = false;
    let end = integrate(
        |_, s| noise_log_rate(qq, eps, s),
        0.0,
        pt0.ln(),
        budget,
        OdeOptions::default(),
        |st| {
            if let Some(tc) = st.crossing(level) {
                crossing = Some(tc);
                t.push(tc);
                pt.push(eta);
                return Control::Halt;
            }
            t.push(st.t1);
            pt.push(st.y1.exp());
            if (st.f1 * st.y1.exp()).abs() < EQUILIBRIUM_DERIVATIVE && st.y1.exp() >= stall_floor {
                stalled += 1;
                if stalled >= EQUILIBRIUM_STEPS {
                    at_equilibrium = true;
                    return Control::Halt;
                }
            } else {
                stalled = 0;
            }
            Control::Continue
        },
    )?;
    let status = if crossing.is_some() {
        TraceStatus::ReachedTarget
    } else if at_equilibrium {
        TraceStatus::Equilibrium
    } else {
        TraceStatus::BudgetExhausted
    };
    let equilibrium = at_equilibrium.then(|| end.y.exp());
    Ok(NoiseTrace {
        q: qq,
        eps,
        eta,
        t,
        ptilde: pt,
        status,
        equilibrium,
        crossing,
    })
}

/// Noise-fitting rate measurements at one q.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRate {
    pub fit: EscapeFit,
    pub times: Vec<f64>,
    /// `T(2 eps) / T(eps)` at the smallest starting contamination.
    pub eps_doubling_ratio: f64,
}

/// Generous time budget for rate measurements; the integrator's step limit
/// bounds the work instead.
const RATE_BUDGET: f64 = 1e30;

fn noise_time(q: QParam, eps: f64, pt0: f64, eta: f64) -> Result<f64> {
    let tr = integrate_noise_flow(
        q,
        eps,
        SuccessProb::new(pt0)?,
        SuccessProb::new(eta)?,
        RATE_BUDGET,
    )?;
    tr.crossing
        .ok_or_else(|| Error::Numerical(format!("noise flow from {pt0} did not reach {eta}")))
}

/// Fit noise-fitting times over a grid of starting contaminations below `eta`.
pub fn noise_rate_exponent(
    q: QParam,
    eps: f64,
    ptilde0_grid: &[f64],
    eta: f64,
) -> Result<NoiseRate> {
    if q.get() == 0.0 {
        return Err(Error::Domain(
            "the q = 0 noise flow never reaches its target".into(),
        ));
    }
    if ptilde0_grid.iter().any(|&p| p >= eta) {
        return Err(Error::InsufficientGrid(
            "every starting contamination must lie below eta".into(),
        ));
    }
    let times = ptilde0_grid
        .iter()
        .map(|&p| noise_time(q, eps, p, eta))
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_escape_exponent(q, ptilde0_grid, &times)?;
    let smallest = ptilde0_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let idx = ptilde0_grid
        .iter()
        .position(|&p| p == smallest)
        .expect("nonempty grid");
    let doubled = noise_time(q, 2.0 * eps, smallest, eta)?;
    Ok(NoiseRate {
        fit,
        eps_doubling_ratio: doubled / times[idx],
        times,
    })
}

/// `T_q(1-eps0, 1-eps1) / T_q2(1-eps0, 1-eps1)` on the sigmoid score model,
/// by quadrature in `ln(1-u)`.
pub fn near_optimality_ratio(q: QParam, q2: QParam, eps0: f64, eps1: f64) -> Result<f64> {
    if !(eps1 > 0.0 && eps1 < eps0 && eps0 < 0.5) {
        return Err(Error::Domain(format!(
            "need 0 < eps1 < eps0 < 1/2, got eps0 = {eps0}, eps1 = {eps1}"
        )));
    }
    let time = |qq: f64| {
        // u = 1 - e^v: du / (u^(2-q) (1-u)^2) = e^-v / (1 - e^v)^(2-q) dv
        quad(
            |v: f64| (-v).exp() / (-v.exp_m1()).powf(2.0 - qq),
            eps1.ln(),
            eps0.ln(),
            1e-12,
            0.0,
        )
    };
    Ok(time(q.get())? / time(q2.get())?)
}

/// Explicit Euler on `theta' = -grad l_q` for any model.
///
/// Records the exact success probability at every step until it exceeds
/// `target` or `budget` steps are spent.
pub fn model_flow<M: Model + Clone>(
    model: &M,
    ex: &Example,
    q: QParam,
    step: f64,
    budget: usize,
    target: f64,
) -> Result<(DynamicsTrace, M)> {
    if !(step > 0.0) {
        return Err(Error::Domain(format!("step must be positive, got {step}")));
    }
    let qq = q.get();
    let mut m = model.clone();
    let mut t = Vec::with_capacity(budget.min(1 << 20) + 1);
    let mut p = Vec::with_capacity(t.capacity());
    let mut pred = Vec::with_capacity(t.capacity());
    let mut hit = None;
    for k in 0..=budget {
        let (lp, s) = m.log_marginal_score(ex)?;
        let pk = lp.exp();
        if pk == 0.0 {
            return Err(Error::ColdZero(
                "marginal underflows during model flow".into(),
            ));
        }
        let s2: f64 = s.iter().map(|v| v * v).sum();
        t.push(k as f64 * step);
        p.push(pk);
        pred.push(((2.0 - qq) * lp).exp() * s2);
        if pk > target {
            hit = Some(k as f64 * step);
            break;
        }
        if k == budget {
            break;
        }
        let c = step * ((1.0 - qq) * lp).exp();
        for (w, g) in m.params_mut().iter_mut().zip(&s) {
            *w += c * g;
        }
    }
    let status = if hit.is_some() {
        TraceStatus::ReachedTarget
    } else {
        TraceStatus::BudgetExhausted
    };
    let trace = DynamicsTrace {
        q: qq,
        t,
        p,
        pdot_predicted: pred,
        status,
        crossings: vec![Crossing {
            level: target,
            time: hit,
        }],
    };
    Ok((trace, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LatentDims, LatentSeqModel, SigmoidModel};
    use crate::numeric::logit;
    use crate::rng::Stream;

    fn q(v: f64) -> QParam {
        QParam::new(v).unwrap()
    }
    fn sp(v: f64) -> SuccessProb {
        SuccessProb::new(v).unwrap()
    }

    #[test]
    fn flow_matches_quadrature_at_q1() {
        let tr = integrate_sigmoid_flow(q(1.0), sp(1e-3), sp(0.5), 1e6).unwrap();
        let t = tr.crossing(0.5).unwrap();
        // closed form of int du / (u (1-u)^2)
        let prim = |u: f64| u.ln() - (1.0 - u).ln() + 1.0 / (1.0 - u);
        let exact = prim(0.5) - prim(1e-3);
        assert!(((t - exact) / exact).abs() < 1e-6);
        let quadr = exact_sigmoid_time(q(1.0), sp(1e-3), sp(0.5)).unwrap();
        assert!(((quadr - exact) / exact).abs() < 1e-9);
        assert!(tr.p.windows(2).all(|w| w[1] >= w[0]));
        assert!(tr.t.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn q0_escape_time_is_inverse_p0() {
        let tr = integrate_sigmoid_flow(q(0.0), sp(1e-4), sp(0.5), 1e9).unwrap();
        let ratio = tr.crossing(0.5).unwrap() * 1e-4;
        assert!((0.9..=1.1).contains(&ratio), "{ratio}");
    }

    #[test]
    fn budget_exhaustion_is_not_an_error() {
        let tr = integrate_sigmoid_flow(q(0.0), sp(1e-4), sp(0.5), 10.0).unwrap();
        assert_eq!(tr.status, TraceStatus::BudgetExhausted);
        assert_eq!(tr.crossing(0.5), None);
        assert!(integrate_sigmoid_flow(q(0.0), sp(0.2), sp(0.6), 10.0).is_err());
    }

    #[test]
    fn exact_time_asymptotics() {
        assert_eq!(exact_sigmoid_time(q(1.0), sp(0.3), sp(0.3)).unwrap(), 0.0);
        let t1 = exact_sigmoid_time(q(1.0), sp(1e-6), sp(0.5)).unwrap();
        let r = t1 / (1e6f64).ln();
        assert!((0.9..=1.2).contains(&r), "{r}");
        let mut prev = f64::INFINITY;
        for &p0 in &[1e-4, 1e-6, 1e-8] {
            let t = exact_sigmoid_time(q(0.5), sp(p0), sp(0.5)).unwrap();
            let gap = (t * 0.5 * p0.powf(0.5) - 1.0).abs();
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 0.01);
    }

    #[test]
    fn escape_exponents() {
        let grid = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7];
        for (qq, lo, hi) in [(0.0, 0.95, 1.05), (0.5, 0.45, 0.55)] {
            let times: Vec<f64> = grid
                .iter()
                .map(|&p| exact_sigmoid_time(q(qq), sp(p), sp(0.5)).unwrap())
                .collect();
            let f = fit_escape_exponent(q(qq), &grid, &times).unwrap();
            assert!(f.slope >= lo && f.slope <= hi, "q={qq} slope={}", f.slope);
        }
        let times: Vec<f64> = grid
            .iter()
            .map(|&p| exact_sigmoid_time(q(1.0), sp(p), sp(0.5)).unwrap())
            .collect();
        let f = fit_escape_exponent(q(1.0), &grid, &times).unwrap();
        assert_eq!(f.kind, FitKind::Logarithmic);
        assert!(f.r2 > 0.999);
        assert!(fit_escape_exponent(q(0.5), &grid[..3], &times[..3]).is_err());
        assert!(fit_escape_exponent(q(0.5), &[1e-2, 2e-2, 3e-2, 4e-2], &times[..4]).is_err());
    }

    #[test]
    fn noise_equilibria() {
        let star = noise_equilibrium(q(0.5), 0.1).unwrap();
        assert!((star - 1.0 / 82.0).abs() < 1e-15);
        let star1 = noise_equilibrium(q(1.0), 0.1).unwrap();
        assert!((star1 - 0.1).abs() < 1e-14);
        assert!(noise_equilibrium(q(0.0), 0.1).is_err());
        assert!(matches!(
            integrate_noise_flow(q(0.5), 0.1, sp(1e-4), sp(0.05), 1e6),
            Err(Error::UnreachableTarget { .. })
        ));
    }

    #[test]
    fn noise_flow_q0_decays() {
        let tr = integrate_noise_flow(q(0.0), 0.1, sp(1e-2), sp(0.05), 1e4).unwrap();
        assert_eq!(tr.status, TraceStatus::BudgetExhausted);
        assert!(tr.crossing.is_none());
        assert!(tr.ptilde.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn noise_flow_approaches_equilibrium_from_below() {
        let star = noise_equilibrium(q(0.5), 0.1).unwrap();
        let tr = integrate_noise_flow(q(0.5), 0.1, sp(1e-3), sp(star), 1e7).unwrap();
        assert!(tr.ptilde.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-14)));
        assert!(tr.ptilde.iter().all(|&v| v <= star * (1.0 + 1e-12)));
        assert_eq!(tr.status, TraceStatus::Equilibrium);
        assert!((tr.equilibrium.unwrap() - star).abs() < 1e-9 * star);
    }

    #[test]
    fn noise_rate_half() {
        let grid = [1e-5, 1e-6, 1e-7, 1e-8];
        let r = noise_rate_exponent(q(0.5), 0.1, &grid, 1e-3).unwrap();
        assert!((0.45..=0.55).contains(&r.fit.slope), "{}", r.fit.slope);
        assert!(
            (0.4..=0.6).contains(&r.eps_doubling_ratio),
            "{}",
            r.eps_doubling_ratio
        );
    }

    #[test]
    fn near_optimality() {
        assert_eq!(
            near_optimality_ratio(q(0.3), q(0.3), 1e-3, 1e-4).unwrap(),
            1.0
        );
        let r = near_optimality_ratio(q(0.0), q(1.0), 1e-3, 1e-4).unwrap();
        assert!((r - 1.0).abs() < 5e-3);
        let gaps: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
            .iter()
            .map(|&e| (near_optimality_ratio(q(0.0), q(1.0), e, e / 10.0).unwrap() - 1.0).abs())
            .collect();
        for w in gaps.windows(2) {
            let ratio = w[1] / w[0];
            assert!((0.25..=1.0).contains(&ratio), "{ratio}");
        }
    }

    #[test]
    fn sigmoid_model_flow_matches_prediction() {
        let m = SigmoidModel::new(logit(1e-2));
        let ex = Example::new(0, vec![1]);
        let (tr, _) = model_flow(&m, &ex, q(0.5), 1e-3, 20_000, 0.5).unwrap();
        let meas = tr.pdot_measured();
        for (a, b) in meas.iter().zip(&tr.pdot_predicted) {
            assert!((0.9..=1.1).contains(&(a / b)));
        }
        assert!(tr.p.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn latent_model_flow_monotone() {
        let d = LatentDims {
            n_inputs: 1,
            latent_vocab: 2,
            latent_len: 1,
            output_vocab: 3,
            output_len: 2,
        };
        let m = LatentSeqModel::random(d, 0.5, &mut Stream::new(3)).unwrap();
        let ex = Example::new(0, vec![2, 1]);
        let (tr, _) = model_flow(&m, &ex, q(0.25), 1e-3, 2000, 0.99).unwrap();
        assert!(tr.p.windows(2).all(|w| w[1] >= w[0]));
        let meas = tr.pdot_measured();
        for (a, b) in meas.iter().zip(&tr.pdot_predicted) {
            assert!((0.9..=1.1).contains(&(a / b)));
        }
    }
}
