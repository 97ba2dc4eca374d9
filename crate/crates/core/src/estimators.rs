//! GARL plug-in, GARL-RLOO and PAFT gradient estimators over a shared sample
//! pool, and the closed-form leading-order bias of the plug-in estimator.
//!
//! All weights stay in log space. Raw outputs are the mathematical estimators;
//! [`EstimatorOutput::normalized`] applies the algorithm-side `1/M^q` rescale.

use std::fmt;

use crate::error::{Error, Result};
use crate::models::{Example, GradMeta, GradientVector, LatentSeqModel, Model, SparseGrad};
use crate::numeric::{log_add_exp, log_sum_exp};
use crate::qcore::QParam;
use crate::rng::Stream;

/// Weight and score pieces of one latent trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Latent index in the producing model.
    pub id: usize,
    pub log_prior: f64,
    /// `log w = log p(y*|x, z)`.
    pub log_w: f64,
    /// `grad log p(z|x)`.
    pub prior: SparseGrad,
    /// `grad log p(y*|x, z)`.
    pub lik: SparseGrad,
}

/// `M` prior draws with their log weights and score gradients.
///
/// Repeated latents share one stored [`Trajectory`]; `members[m]` indexes it.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePool {
    n_params: usize,
    seed: u64,
    slots: Vec<Trajectory>,
    members: Vec<usize>,
    log_w: Vec<f64>,
    log_mean_w: f64,
}

impl SamplePool {
    pub fn new(
        n_params: usize,
        seed: u64,
        slots: Vec<Trajectory>,
        members: Vec<usize>,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Empty("a sample pool needs M >= 1"));
        }
        if let Some(&bad) = members.iter().find(|&&s| s >= slots.len()) {
            return Err(Error::Shape(format!("member slot {bad} out of range")));
        }
        for t in &slots {
            if t.log_w.is_nan() || t.log_w > 1e-12 {
                return Err(Error::Domain(format!(
                    "log weight {} is not a log-probability",
                    t.log_w
                )));
            }
            if t.prior
                .idx
                .iter()
                .chain(&t.lik.idx)
                .any(|&i| i as usize >= n_params)
            {
                return Err(Error::Shape("score index beyond parameter count".into()));
            }
        }
        let log_w: Vec<f64> = members.iter().map(|&s| slots[s].log_w.min(0.0)).collect();
        let log_mean_w = log_sum_exp(&log_w) - (log_w.len() as f64).ln();
        Ok(Self {
            n_params,
            seed,
            slots,
            members,
            log_w,
            log_mean_w,
        })
    }

    /// One stored trajectory per draw.
    pub fn from_trajectories(
        n_params: usize,
        seed: u64,
        trajectories: Vec<Trajectory>,
    ) -> Result<Self> {
        let members = (0..trajectories.len()).collect();
        Self::new(n_params, seed, trajectories, members)
    }

    pub fn m(&self) -> usize {
        self.members.len()
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn log_w(&self, m: usize) -> f64 {
        self.log_w[m]
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_w
    }

    /// `log wbar_M`, `-inf` for a degenerate pool.
    pub fn log_mean_weight(&self) -> f64 {
        self.log_mean_w
    }

    pub fn trajectory(&self, m: usize) -> usize {
        self.slots[self.members[m]].id
    }

    pub fn prior_score(&self, m: usize) -> &SparseGrad {
        &self.slots[self.members[m]].prior
    }

    pub fn lik_score(&self, m: usize) -> &SparseGrad {
        &self.slots[self.members[m]].lik
    }

    /// `out += scale * grad log p(z_m, y*|x)`.
    pub fn add_joint_score(&self, m: usize, scale: f64, out: &mut [f64]) {
        let t = &self.slots[self.members[m]];
        t.prior.axpy(scale, out);
        t.lik.axpy(scale, out);
    }

    pub fn is_degenerate(&self) -> bool {
        self.log_mean_w == f64::NEG_INFINITY
    }

    /// Effective sample size `(sum w)^2 / sum w^2`; 0 for a degenerate pool.
    pub fn ess(&self) -> f64 {
        if self.is_degenerate() {
            return 0.0;
        }
        let twice: Vec<f64> = self.log_w.iter().map(|l| 2.0 * l).collect();
        (2.0 * log_sum_exp(&self.log_w) - log_sum_exp(&twice)).exp()
    }

    /// Scatter per-draw coefficients onto stored trajectories, in slot order.
    fn fold_joint(&self, coef: &[f64], out: &mut [f64]) {
        let mut per_slot = vec![0.0; self.slots.len()];
        for (m, &c) in coef.iter().enumerate() {
            per_slot[self.members[m]] += c;
        }
        for (t, &c) in self.slots.iter().zip(&per_slot) {
            if c != 0.0 {
                t.prior.axpy(c, out);
                t.lik.axpy(c, out);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorTag {
    Plugin,
    Rloo,
    Paft,
    PaftConditional,
}

impl EstimatorTag {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorTag::Plugin => "plugin",
            EstimatorTag::Rloo => "rloo",
            EstimatorTag::Paft => "paft",
            EstimatorTag::PaftConditional => "paft_conditional",
        }
    }
}

impl fmt::Display for EstimatorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EstimatorTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plugin" => Ok(EstimatorTag::Plugin),
            "rloo" => Ok(EstimatorTag::Rloo),
            "paft" => Ok(EstimatorTag::Paft),
            "paft_conditional" => Ok(EstimatorTag::PaftConditional),
            other => Err(Error::Parse(format!("unknown estimator `{other}`"))),
        }
    }
}

/// A gradient estimate with its estimator identity.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorOutput {
    pub grad: GradientVector,
    pub tag: EstimatorTag,
    pub q: f64,
    pub m: usize,
    pub k: Option<usize>,
    /// Whether the `1/M^q` rescale has been applied.
    pub normalized: bool,
    /// PAFT resample indices into the pool, empty otherwise.
    pub resampled: Vec<usize>,
    pub ess: f64,
}

/// `M^-q`, computed in log space.
pub fn normalization_factor(q: QParam, m: usize) -> f64 {
    (-q.get() * (m as f64).ln()).exp()
}

impl EstimatorOutput {
    fn raw(
        values: Vec<f64>,
        tag: EstimatorTag,
        q: QParam,
        pool: &SamplePool,
        k: Option<usize>,
    ) -> Self {
        let meta = GradMeta {
            op: tag.as_str(),
            q: Some(q.get()),
            m: Some(pool.m()),
            seed: Some(pool.seed()),
        };
        Self {
            grad: GradientVector { values, meta },
            tag,
            q: q.get(),
            m: pool.m(),
            k,
            normalized: false,
            resampled: Vec::new(),
            ess: pool.ess(),
        }
    }

    /// Apply the `1/M^q` rescale: every coordinate is multiplied by
    /// [`normalization_factor`]. Idempotent.
    pub fn normalized(&self) -> Self {
        if self.normalized {
            return self.clone();
        }
        let f = normalization_factor(
            QParam::new(self.q).expect("validated at construction"),
            self.m,
        );
        let mut out = self.clone();
        out.grad.values.iter_mut().for_each(|v| *v *= f);
        out.normalized = true;
        out
    }

    pub fn values(&self) -> &[f64] {
        &self.grad.values
    }
}

fn check_pool(pool: &SamplePool) -> Result<()> {
    if pool.is_degenerate() {
        return Err(Error::DegeneratePool(pool.m()));
    }
    Ok(())
}

/// GARL plug-in estimator `gbar_M / wbar_M^q` with `g_m = -w_m grad log p(z_m, y*|x)`.
pub fn garl_plugin(pool: &SamplePool, q: QParam) -> Result<EstimatorOutput> {
    check_pool(pool)?;
    let shift = (pool.m() as f64).ln() + q.get() * pool.log_mean_w;
    let coef: Vec<f64> = pool.log_w.iter().map(|l| -(l - shift).exp()).collect();
    let mut out = vec![0.0; pool.n_params];
    pool.fold_joint(&coef, &mut out);
    Ok(EstimatorOutput::raw(
        out,
        EstimatorTag::Plugin,
        q,
        pool,
        None,
    ))
}

/// Per-draw `(w_m / wbar^q, wbar_{-m}^(1-q))`, the two halves of the RLOO centered weight.
pub fn rloo_weights(pool: &SamplePool, q: QParam) -> Result<Vec<(f64, f64)>> {
    let m = pool.m();
    if m < 2 {
        return Err(Error::PoolTooSmall { got: m, need: 2 });
    }
    check_pool(pool)?;
    let lw = &pool.log_w;
    let mut prefix = vec![f64::NEG_INFINITY; m + 1];
    for i in 0..m {
        prefix[i + 1] = log_add_exp(prefix[i], lw[i]);
    }
    let mut suffix = vec![f64::NEG_INFINITY; m + 1];
    for i in (0..m).rev() {
        suffix[i] = log_add_exp(suffix[i + 1], lw[i]);
    }
    let ln_rest = ((m - 1) as f64).ln();
    let qq = q.get();
    Ok((0..m)
        .map(|i| {
            let amp = (lw[i] - qq * pool.log_mean_w).exp();
            let log_loo = log_add_exp(prefix[i], suffix[i + 1]) - ln_rest;
            let base = if qq == 1.0 {
                1.0
            } else {
                ((1.0 - qq) * log_loo).exp()
            };
            (amp, base)
        })
        .collect())
}

/// Centered RLOO weights `c_m = w_m / wbar^q - wbar_{-m}^(1-q)`.
pub fn rloo_centered_weights(pool: &SamplePool, q: QParam) -> Result<Vec<f64>> {
    Ok(rloo_weights(pool, q)?
        .into_iter()
        .map(|(a, b)| a - b)
        .collect())
}

/// GARL with the leave-one-out baseline on the prior-score term.
pub fn garl_rloo(pool: &SamplePool, q: QParam) -> Result<EstimatorOutput> {
    let parts = rloo_weights(pool, q)?;
    let inv_m = 1.0 / pool.m() as f64;
    let mut prior_coef = vec![0.0; pool.slots.len()];
    let mut lik_coef = vec![0.0; pool.slots.len()];
    for (i, (amp, base)) in parts.into_iter().enumerate() {
        let s = pool.members[i];
        prior_coef[s] -= (amp - base) * inv_m;
        lik_coef[s] -= amp * inv_m;
    }
    let mut out = vec![0.0; pool.n_params];
    for (t, (&a, &b)) in pool.slots.iter().zip(prior_coef.iter().zip(&lik_coef)) {
        t.prior.axpy(a, &mut out);
        t.lik.axpy(b, &mut out);
    }
    Ok(EstimatorOutput::raw(out, EstimatorTag::Rloo, q, pool, None))
}

/// Default number of PAFT resamples.
pub fn default_k(pool: &SamplePool) -> usize {
    pool.m()
}

/// PAFT: resample `K` draws with probabilities proportional to `w_m`, average
/// their joint scores and attenuate by `wbar^(1-q)`.
pub fn paft(
    pool: &SamplePool,
    q: QParam,
    k: usize,
    stream: &mut Stream,
) -> Result<EstimatorOutput> {
    if k == 0 {
        return Err(Error::Empty("paft needs K >= 1"));
    }
    if pool.is_degenerate() {
        return Err(Error::ParticleDegeneracy(pool.m()));
    }
    let max = pool.log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let probs: Vec<f64> = pool.log_w.iter().map(|l| (l - max).exp()).collect();
    let resampled: Vec<usize> = (0..k).map(|_| stream.categorical(&probs)).collect();
    let atten = ((1.0 - q.get()) * pool.log_mean_w).exp();
    let mut coef = vec![0.0; pool.m()];
    let c = -atten / k as f64;
    for &r in &resampled {
        coef[r] += c;
    }
    let mut out = vec![0.0; pool.n_params];
    pool.fold_joint(&coef, &mut out);
    let mut est = EstimatorOutput::raw(out, EstimatorTag::Paft, q, pool, Some(k));
    est.resampled = resampled;
    Ok(est)
}

/// Expectation of [`paft`] over its resampling step, given the pool.
pub fn paft_conditional_mean(pool: &SamplePool, q: QParam) -> Result<EstimatorOutput> {
    check_pool(pool)?;
    let lse = log_sum_exp(&pool.log_w);
    let log_atten = (1.0 - q.get()) * pool.log_mean_w;
    let coef: Vec<f64> = pool
        .log_w
        .iter()
        .map(|l| -(log_atten + l - lse).exp())
        .collect();
    let mut out = vec![0.0; pool.n_params];
    pool.fold_joint(&coef, &mut out);
    Ok(EstimatorOutput::raw(
        out,
        EstimatorTag::PaftConditional,
        q,
        pool,
        None,
    ))
}

/// Exact prior moments of `w = p(y*|x,z)` and `g = -w grad log p(z, y*|x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactMoments {
    pub mu_w: f64,
    pub var_w: f64,
    pub mu_g: Vec<f64>,
    /// Per-coordinate `Cov(g, w)`.
    pub cov_gw: Vec<f64>,
    /// `-grad log P`.
    pub grad_l1: Vec<f64>,
}

pub fn exact_moments(model: &LatentSeqModel, ex: &Example) -> Result<ExactMoments> {
    model.check_example(ex)?;
    let n = model.num_params();
    let nz = model.num_latents();
    if nz > model.cap() {
        return Err(Error::EnumerationCap {
            size: nz,
            cap: model.cap(),
        });
    }
    let mut mu_w = 0.0;
    let mut e_w2 = 0.0;
    let mut mu_g = vec![0.0; n];
    let mut e_gw = vec![0.0; n];
    for z in 0..nz {
        let t = model.trajectory(ex, z);
        let pz = t.log_prior.exp();
        let w = t.log_w.exp();
        mu_w += pz * w;
        e_w2 += pz * w * w;
        t.prior.axpy(-pz * w, &mut mu_g);
        t.lik.axpy(-pz * w, &mut mu_g);
        t.prior.axpy(-pz * w * w, &mut e_gw);
        t.lik.axpy(-pz * w * w, &mut e_gw);
    }
    if mu_w == 0.0 {
        return Err(Error::ColdZero(
            "marginal underflows in moment enumeration".into(),
        ));
    }
    let cov_gw = e_gw.iter().zip(&mu_g).map(|(a, g)| a - g * mu_w).collect();
    let grad_l1 = mu_g.iter().map(|g| g / mu_w).collect();
    Ok(ExactMoments {
        mu_w,
        var_w: (e_w2 - mu_w * mu_w).max(0.0),
        mu_g,
        cov_gw,
        grad_l1,
    })
}

/// Leading-order bias of [`garl_plugin`]:
/// `q / (M P^(q+1)) * [ (q+1)/2 * grad l_1 * Var(w) - Cov(g, w) ]`.
pub fn predicted_bias(
    model: &LatentSeqModel,
    ex: &Example,
    q: QParam,
    m: usize,
) -> Result<GradientVector> {
    if m == 0 {
        return Err(Error::Empty("predicted_bias needs M >= 1"));
    }
    let mo = exact_moments(model, ex)?;
    let qq = q.get();
    let lead = qq / (m as f64 * mo.mu_w.powf(qq + 1.0));
    let half = (qq + 1.0) / 2.0;
    let values = mo
        .grad_l1
        .iter()
        .zip(&mo.cov_gw)
        .map(|(g1, c)| lead * (half * g1 * mo.var_w - c))
        .collect();
    Ok(GradientVector {
        values,
        meta: GradMeta {
            op: "predicted_bias",
            q: Some(qq),
            m: Some(m),
            seed: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{exact_grad_loss, sample_prior, LatentDims};
    use approx::assert_relative_eq;

    fn q(v: f64) -> QParam {
        QParam::new(v).unwrap()
    }

    fn small_model(seed: u64) -> (LatentSeqModel, Example) {
        let d = LatentDims {
            n_inputs: 1,
            latent_vocab: 3,
            latent_len: 1,
            output_vocab: 2,
            output_len: 2,
        };
        (
            LatentSeqModel::random(d, 1.0, &mut Stream::new(seed)).unwrap(),
            Example::new(0, vec![1, 0]),
        )
    }

    fn pool(seed: u64, m: usize) -> (LatentSeqModel, Example, SamplePool) {
        let (model, ex) = small_model(7);
        let p = sample_prior(&model, &ex, m, &mut Stream::new(seed)).unwrap();
        (model, ex, p)
    }

    fn joint_dense(p: &SamplePool, m: usize) -> Vec<f64> {
        let mut v = vec![0.0; p.n_params()];
        p.add_joint_score(m, 1.0, &mut v);
        v
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn plugin_at_zero_is_sample_mean() {
        let (_, _, p) = pool(1, 16);
        let est = garl_plugin(&p, q(0.0)).unwrap();
        let mut mean = vec![0.0; p.n_params()];
        for i in 0..p.m() {
            let w = p.log_w(i).exp();
            for (o, v) in mean.iter_mut().zip(joint_dense(&p, i)) {
                *o -= w * v / p.m() as f64;
            }
        }
        assert!(max_diff(est.values(), &mean) < 1e-15);
    }

    #[test]
    fn plugin_at_one_is_self_normalized() {
        let (_, _, p) = pool(2, 16);
        let est = garl_plugin(&p, q(1.0)).unwrap();
        let total: f64 = (0..p.m()).map(|i| p.log_w(i).exp()).sum();
        let mut sn = vec![0.0; p.n_params()];
        for i in 0..p.m() {
            let w = p.log_w(i).exp();
            for (o, v) in sn.iter_mut().zip(joint_dense(&p, i)) {
                *o -= w * v / total;
            }
        }
        assert!(max_diff(est.values(), &sn) < 1e-14);
    }

    #[test]
    fn rloo_centered_weight_endpoints() {
        let (_, _, p) = pool(3, 12);
        let c0 = rloo_centered_weights(&p, q(0.0)).unwrap();
        let w: Vec<f64> = (0..p.m()).map(|i| p.log_w(i).exp()).collect();
        let total: f64 = w.iter().sum();
        for (i, c) in c0.iter().enumerate() {
            let loo = (total - w[i]) / (p.m() - 1) as f64;
            assert!((c - (w[i] - loo)).abs() < 1e-14);
        }
        let c1: f64 = rloo_centered_weights(&p, q(1.0)).unwrap().iter().sum();
        assert!(c1.abs() < 1e-12);
    }

    #[test]
    fn rloo_requires_two_draws() {
        let (_, _, p) = pool(4, 1);
        assert!(matches!(
            garl_rloo(&p, q(0.5)),
            Err(Error::PoolTooSmall { got: 1, need: 2 })
        ));
    }

    #[test]
    fn paft_attenuation_endpoints() {
        let (_, _, p) = pool(5, 8);
        // a pool of one repeated trajectory makes the resampled mean deterministic
        let one = SamplePool::new(p.n_params(), 0, vec![p.slots[0].clone()], vec![0; 4]).unwrap();
        let joint = joint_dense(&one, 0);
        let w = one.log_w(0).exp();
        let at1 = paft(&one, q(1.0), 4, &mut Stream::new(1)).unwrap();
        assert!(max_diff(at1.values(), &joint.iter().map(|v| -v).collect::<Vec<_>>()) < 1e-15);
        let at0 = paft(&one, q(0.0), 4, &mut Stream::new(1)).unwrap();
        assert!(
            max_diff(
                at0.values(),
                &joint.iter().map(|v| -w * v).collect::<Vec<_>>()
            ) < 1e-15
        );
    }

    #[test]
    fn tower_identity_per_pool() {
        for s in 0..50 {
            let (_, _, p) = pool(100 + s, 1 + (s as usize % 20));
            for &qq in &[0.0, 0.25, 0.5, 1.0] {
                let a = paft_conditional_mean(&p, q(qq)).unwrap();
                let b = garl_plugin(&p, q(qq)).unwrap();
                assert!(max_diff(a.values(), b.values()) < 1e-12);
            }
        }
    }

    #[test]
    fn single_draw_conditional_mean() {
        let (_, _, p) = pool(6, 1);
        let est = paft_conditional_mean(&p, q(0.5)).unwrap();
        let w = p.log_w(0).exp();
        let expected: Vec<f64> = joint_dense(&p, 0)
            .iter()
            .map(|v| -w.powf(0.5) * v)
            .collect();
        assert!(max_diff(est.values(), &expected) < 1e-14);
    }

    #[test]
    fn dominant_weight_limit() {
        let (model, ex, _) = pool(0, 1);
        let mut a = model.trajectory(&ex, 0);
        let mut b = model.trajectory(&ex, 1);
        a.log_w = -1.0;
        b.log_w = -1.0 - 1e6f64.ln();
        let p = SamplePool::from_trajectories(model.num_params(), 0, vec![a.clone(), b]).unwrap();
        let est = paft_conditional_mean(&p, q(0.5)).unwrap();
        let wbar = (1.0 + 1e-6) * (-1.0f64).exp() / 2.0;
        let mut only_a = vec![0.0; model.num_params()];
        a.prior.axpy(-wbar.powf(0.5), &mut only_a);
        a.lik.axpy(-wbar.powf(0.5), &mut only_a);
        let scale = only_a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_diff(est.values(), &only_a) < 1e-5 * scale);
    }

    #[test]
    fn degenerate_pools_raise() {
        let (model, ex, _) = pool(0, 1);
        let mut t = model.trajectory(&ex, 0);
        t.log_w = f64::NEG_INFINITY;
        let p = SamplePool::from_trajectories(model.num_params(), 0, vec![t.clone(), t]).unwrap();
        assert!(matches!(
            garl_plugin(&p, q(0.5)),
            Err(Error::DegeneratePool(2))
        ));
        assert!(matches!(
            garl_rloo(&p, q(0.5)),
            Err(Error::DegeneratePool(2))
        ));
        assert!(matches!(
            paft(&p, q(0.5), 2, &mut Stream::new(0)),
            Err(Error::ParticleDegeneracy(2))
        ));
        assert!(matches!(
            paft_conditional_mean(&p, q(0.5)),
            Err(Error::DegeneratePool(2))
        ));
        assert_eq!(p.ess(), 0.0);
    }

    #[test]
    fn ess_extremes() {
        let (model, ex, _) = pool(0, 1);
        let t = model.trajectory(&ex, 0);
        let p = SamplePool::new(model.num_params(), 0, vec![t.clone()], vec![0; 9]).unwrap();
        assert_relative_eq!(p.ess(), 9.0, max_relative = 1e-13);
        let mut dead = t.clone();
        dead.log_w = f64::NEG_INFINITY;
        let p = SamplePool::new(model.num_params(), 0, vec![t, dead], vec![0, 1, 1, 1]).unwrap();
        assert_relative_eq!(p.ess(), 1.0, max_relative = 1e-13);
    }

    #[test]
    fn normalization_is_exact_rescale() {
        let (_, _, p) = pool(8, 32);
        for &qq in &[0.0, 0.3, 0.75, 1.0] {
            let raw = garl_rloo(&p, q(qq)).unwrap();
            let n = raw.normalized();
            let f = normalization_factor(q(qq), 32);
            assert!(n.normalized && !raw.normalized);
            for (a, b) in n.values().iter().zip(raw.values()) {
                assert_eq!(*a, b * f);
            }
            assert_eq!(n.normalized(), n);
        }
        assert_eq!(normalization_factor(q(0.0), 32), 1.0);
    }

    #[test]
    fn predicted_bias_scaling() {
        let (model, ex) = small_model(9);
        let b0 = predicted_bias(&model, &ex, q(0.0), 16).unwrap();
        assert!(b0.values.iter().all(|v| *v == 0.0));
        let b16 = predicted_bias(&model, &ex, q(0.5), 16).unwrap();
        let b8 = predicted_bias(&model, &ex, q(0.5), 8).unwrap();
        for (a, b) in b8.values.iter().zip(&b16.values) {
            assert_eq!(*a, 2.0 * b);
        }
    }

    #[test]
    fn exact_moments_match_gradients() {
        let (model, ex) = small_model(10);
        let mo = exact_moments(&model, &ex).unwrap();
        let g0 = exact_grad_loss(&model, &ex, q(0.0)).unwrap();
        assert!(max_diff(&mo.mu_g, &g0.values) < 1e-14);
        let g1 = exact_grad_loss(&model, &ex, q(1.0)).unwrap();
        assert!(max_diff(&mo.grad_l1, &g1.values) < 1e-13);
    }

    #[test]
    fn plugin_converges_at_large_m() {
        let (model, ex) = small_model(12);
        let p = sample_prior(&model, &ex, 100_000, &mut Stream::new(13)).unwrap();
        let est = garl_plugin(&p, q(0.5)).unwrap();
        let exact = exact_grad_loss(&model, &ex, q(0.5)).unwrap();
        assert!(max_diff(est.values(), &exact.values) < 2e-2 * exact.max_abs());
    }
}
