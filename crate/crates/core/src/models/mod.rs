//! Enumerable models with exact marginals and exact gradients.
//!
//! Every model exposes `log P` and the score `grad log P` for an example's
//! target. Loss gradients for any q are derived from that pair, so the
//! factorizations `grad l_q = P^-q grad l_0 = P^(1-q) grad l_1` hold by
//! construction up to rounding.

mod format;
mod latent;
mod simple;

pub use format::{load_model, read_model, write_model, AnyModel};
pub use latent::{
    expected_reward, sample_prior, LatentDims, LatentSeqModel, DEFAULT_ENUMERATION_CAP,
};
pub use simple::{CategoricalModel, SigmoidModel};

use crate::error::{Error, Result};
use crate::qcore::{loss_q, QParam, SuccessProb};

/// Default central finite-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// A supervised example: input id, target token sequence and whether the
/// target was deliberately corrupted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Example {
    pub input: usize,
    pub target: Vec<usize>,
    pub corrupted: bool,
}

impl Example {
    pub fn new(input: usize, target: Vec<usize>) -> Self {
        Self {
            input,
            target,
            corrupted: false,
        }
    }
}

/// Provenance attached to a gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradMeta {
    pub op: &'static str,
    pub q: Option<f64>,
    pub m: Option<usize>,
    pub seed: Option<u64>,
}

impl GradMeta {
    pub fn exact(op: &'static str, q: Option<f64>) -> Self {
        Self {
            op,
            q,
            m: None,
            seed: None,
        }
    }
}

/// A gradient in the producing model's flattened parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    pub values: Vec<f64>,
    pub meta: GradMeta,
}

impl GradientVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs_diff(&self, other: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Sparse gradient: parallel index and value lists. Indices may repeat.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseGrad {
    pub idx: Vec<u32>,
    pub val: Vec<f64>,
}

impl SparseGrad {
    pub fn push(&mut self, i: usize, v: f64) {
        self.idx.push(i as u32);
        self.val.push(v);
    }

    /// `out += scale * self`.
    pub fn axpy(&self, scale: f64, out: &mut [f64]) {
        for (&i, &v) in self.idx.iter().zip(&self.val) {
            out[i as usize] += scale * v;
        }
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        self.axpy(1.0, &mut out);
        out
    }
}

/// A model whose target probability and its log-gradient are exactly computable.
pub trait Model {
    fn num_params(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    /// `(log P, grad log P)` for the example's target.
    fn log_marginal_score(&self, ex: &Example) -> Result<(f64, Vec<f64>)>;
    /// `log P` alone; may be cheaper than the score.
    fn log_marginal(&self, ex: &Example) -> Result<f64> {
        Ok(self.log_marginal_score(ex)?.0)
    }
}

fn checked_prob(log_p: f64) -> Result<SuccessProb> {
    let p = log_p.exp();
    if p == 0.0 {
        return Err(Error::ColdZero(format!(
            "marginal underflows (log P = {log_p})"
        )));
    }
    SuccessProb::new(p.min(1.0))
}

/// Exact success probability of the example's target.
pub fn exact_marginal<M: Model + ?Sized>(model: &M, ex: &Example) -> Result<SuccessProb> {
    checked_prob(model.log_marginal(ex)?)
}

/// Exact score `grad log P`.
pub fn score<M: Model + ?Sized>(model: &M, ex: &Example) -> Result<GradientVector> {
    let (lp, s) = model.log_marginal_score(ex)?;
    checked_prob(lp)?;
    Ok(GradientVector {
        values: s,
        meta: GradMeta::exact("score", None),
    })
}

/// The three exact gradients tied together by the factorization identity.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradients {
    pub p: f64,
    pub log_p: f64,
    /// `-grad P`
    pub grad_l0: Vec<f64>,
    /// `-grad log P`
    pub grad_l1: Vec<f64>,
    /// `-P^(1-q) grad log P`
    pub grad_lq: Vec<f64>,
}

pub fn loss_gradients<M: Model + ?Sized>(
    model: &M,
    ex: &Example,
    q: QParam,
) -> Result<LossGradients> {
    let (lp, s) = model.log_marginal_score(ex)?;
    let p = checked_prob(lp)?.get();
    let cq = ((1.0 - q.get()) * lp).exp();
    Ok(LossGradients {
        p,
        log_p: lp,
        grad_l0: s.iter().map(|v| -p * v).collect(),
        grad_l1: s.iter().map(|v| -v).collect(),
        grad_lq: s.iter().map(|v| -cq * v).collect(),
    })
}

/// Exact gradient of `-log_q P`.
pub fn exact_grad_loss<M: Model + ?Sized>(
    model: &M,
    ex: &Example,
    q: QParam,
) -> Result<GradientVector> {
    let g = loss_gradients(model, ex, q)?;
    Ok(GradientVector {
        values: g.grad_lq,
        meta: GradMeta::exact("exact_grad_loss", Some(q.get())),
    })
}

/// `loss_q(exact_marginal)`, evaluated from `log P` so that tiny marginals keep precision.
pub fn exact_loss<M: Model + ?Sized>(model: &M, ex: &Example, q: QParam) -> Result<f64> {
    let lp = model.log_marginal(ex)?;
    let p = checked_prob(lp)?;
    if q.get() == 1.0 {
        return Ok(-lp);
    }
    // -expm1((1-q) log P) / (1-q) is the same quantity without cancellation.
    let a = 1.0 - q.get();
    let v = -(a * lp).exp_m1() / a;
    debug_assert!((v - loss_q(p, q)?).abs() <= 1e-9 * v.abs().max(1.0));
    Ok(v)
}

/// Central finite differences of `exact_loss` with respect to every parameter.
pub fn finite_diff_grad<M: Model + Clone>(
    model: &M,
    ex: &Example,
    q: QParam,
    h: f64,
) -> Result<GradientVector> {
    if !(h > 0.0) {
        return Err(Error::Domain(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mut work = model.clone();
    let mut out = Vec::with_capacity(model.num_params());
    for i in 0..model.num_params() {
        let orig = work.params()[i];
        work.params_mut()[i] = orig + h;
        let up = exact_loss(&work, ex, q)?;
        work.params_mut()[i] = orig - h;
        let down = exact_loss(&work, ex, q)?;
        work.params_mut()[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    Ok(GradientVector {
        values: out,
        meta: GradMeta::exact("finite_diff_grad", Some(q.get())),
    })
}

/// Sup-norm relative error of `approx` against `exact`, with an absolute floor.
pub fn relative_error(approx: &[f64], exact: &[f64], floor: f64) -> f64 {
    let scale = exact.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(floor);
    approx
        .iter()
        .zip(exact)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale
}
