use std::collections::BTreeMap;
use std::ops::Range;

use super::{Example, Model, SparseGrad};
use crate::error::{Error, Result};
use crate::estimators::{SamplePool, Trajectory};
use crate::numeric::{log_softmax_into, log_sum_exp, softmax};
use crate::rng::Stream;

/// Default bound on `V_z^L` for exact enumeration.
pub const DEFAULT_ENUMERATION_CAP: usize = 4096;

const MAX_PARAMS: usize = 1 << 26;

/// Shape of a [`LatentSeqModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LatentDims {
    pub n_inputs: usize,
    pub latent_vocab: usize,
    pub latent_len: usize,
    pub output_vocab: usize,
    pub output_len: usize,
}

impl LatentDims {
    /// `V_z^L`, or `None` on overflow.
    pub fn num_latents(&self) -> Option<usize> {
        self.latent_vocab
            .checked_pow(u32::try_from(self.latent_len).ok()?)
    }

    fn validate(&self) -> Result<usize> {
        if self.n_inputs == 0
            || self.latent_vocab == 0
            || self.latent_len == 0
            || self.output_vocab == 0
            || self.output_len == 0
        {
            return Err(Error::Shape(format!(
                "all dimensions must be positive: {self:?}"
            )));
        }
        let nz = self
            .num_latents()
            .ok_or_else(|| Error::Shape("latent space size overflows".into()))?;
        let n = self.prior_size() + self.output_size(nz);
        if n > MAX_PARAMS {
            return Err(Error::Shape(format!(
                "{n} parameters exceeds the supported maximum {MAX_PARAMS}"
            )));
        }
        Ok(nz)
    }

    fn prior_contexts(&self, l: usize) -> usize {
        if l == 0 {
            1
        } else {
            self.latent_vocab
        }
    }

    fn output_contexts(&self, t: usize) -> usize {
        if t == 0 {
            1
        } else {
            self.output_vocab
        }
    }

    fn prior_size(&self) -> usize {
        (0..self.latent_len)
            .map(|l| self.n_inputs * self.prior_contexts(l) * self.latent_vocab)
            .sum()
    }

    fn output_size(&self, nz: usize) -> usize {
        (0..self.output_len)
            .map(|t| self.n_inputs * nz * self.output_contexts(t) * self.output_vocab)
            .sum()
    }

    pub fn num_params(&self) -> Result<usize> {
        let nz = self.validate()?;
        Ok(self.prior_size() + self.output_size(nz))
    }
}

/// Tabular autoregressive latent-variable model.
///
/// The latent `z = (z_0, .., z_{L-1})` is drawn token by token, each token
/// conditioned on the input and the previous latent token. The output
/// `y = (y_0, .., y_{T-1})` is drawn token by token, each conditioned on the
/// input, the whole latent sequence and the previous output token.
///
/// Flattened parameter order, all row-major:
/// prior tables for `l = 0..L` with shape `[n_inputs][C_l][V_z]`
/// (`C_0 = 1`, otherwise `V_z`), then output tables for `t = 0..T` with shape
/// `[n_inputs][V_z^L][C_t][V_y]` (`C_0 = 1`, otherwise `V_y`).
/// Latent sequences are indexed in base `V_z` with `z_0` most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSeqModel {
    dims: LatentDims,
    params: Vec<f64>,
    cap: usize,
    n_latents: usize,
    prior_off: Vec<usize>,
    out_off: Vec<usize>,
}

impl LatentSeqModel {
    pub fn new(dims: LatentDims, params: Vec<f64>) -> Result<Self> {
        let n_latents = dims.validate()?;
        let n = dims.num_params()?;
        if params.len() != n {
            return Err(Error::Shape(format!(
                "expected {n} parameters, got {}",
                params.len()
            )));
        }
        if let Some(i) = params.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("parameter {i} is not finite")));
        }
        let mut prior_off = Vec::with_capacity(dims.latent_len);
        let mut off = 0;
        for l in 0..dims.latent_len {
            prior_off.push(off);
            off += dims.n_inputs * dims.prior_contexts(l) * dims.latent_vocab;
        }
        let mut out_off = Vec::with_capacity(dims.output_len);
        for t in 0..dims.output_len {
            out_off.push(off);
            off += dims.n_inputs * n_latents * dims.output_contexts(t) * dims.output_vocab;
        }
        Ok(Self {
            dims,
            params,
            cap: DEFAULT_ENUMERATION_CAP,
            n_latents,
            prior_off,
            out_off,
        })
    }

    pub fn zeros(dims: LatentDims) -> Result<Self> {
        Self::new(dims, vec![0.0; dims.num_params()?])
    }

    /// Parameters drawn uniformly from `[-scale, scale]`.
    pub fn random(dims: LatentDims, scale: f64, stream: &mut Stream) -> Result<Self> {
        let n = dims.num_params()?;
        let params = (0..n)
            .map(|_| scale * (2.0 * stream.uniform() - 1.0))
            .collect();
        Self::new(dims, params)
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn dims(&self) -> LatentDims {
        self.dims
    }

    pub fn num_latents(&self) -> usize {
        self.n_latents
    }

    pub fn prior_range(&self) -> Range<usize> {
        0..self.out_off[0]
    }

    pub fn output_range(&self) -> Range<usize> {
        self.out_off[0]..self.params.len()
    }

    /// Decode a latent index into its token sequence.
    pub fn decode(&self, mut z: usize) -> Vec<usize> {
        let mut seq = vec![0; self.dims.latent_len];
        for slot in seq.iter_mut().rev() {
            *slot = z % self.dims.latent_vocab;
            z /= self.dims.latent_vocab;
        }
        seq
    }

    pub fn encode(&self, seq: &[usize]) -> usize {
        seq.iter()
            .fold(0, |z, &tok| z * self.dims.latent_vocab + tok)
    }

    fn prior_row_offset(&self, l: usize, x: usize, ctx: usize) -> usize {
        let c = self.dims.prior_contexts(l);
        self.prior_off[l] + (x * c + ctx) * self.dims.latent_vocab
    }

    fn output_row_offset(&self, t: usize, x: usize, z: usize, ctx: usize) -> usize {
        let c = self.dims.output_contexts(t);
        self.out_off[t] + ((x * self.n_latents + z) * c + ctx) * self.dims.output_vocab
    }

    fn row(&self, off: usize, width: usize) -> &[f64] {
        &self.params[off..off + width]
    }

    pub fn check_example(&self, ex: &Example) -> Result<()> {
        if ex.input >= self.dims.n_inputs {
            return Err(Error::Shape(format!(
                "input {} out of range (n_inputs = {})",
                ex.input, self.dims.n_inputs
            )));
        }
        if ex.target.len() != self.dims.output_len {
            return Err(Error::Shape(format!(
                "target length {} != output length {}",
                ex.target.len(),
                self.dims.output_len
            )));
        }
        if let Some(tok) = ex.target.iter().find(|&&t| t >= self.dims.output_vocab) {
            return Err(Error::Shape(format!("target token {tok} out of range")));
        }
        Ok(())
    }

    fn check_cap(&self) -> Result<()> {
        if self.n_latents > self.cap {
            return Err(Error::EnumerationCap {
                size: self.n_latents,
                cap: self.cap,
            });
        }
        Ok(())
    }

    /// Accumulate `log p(z|x)` and, when requested, its sparse gradient.
    fn prior_terms(&self, x: usize, z: usize, mut grad: Option<&mut SparseGrad>) -> f64 {
        let vz = self.dims.latent_vocab;
        let seq = self.decode(z);
        let mut buf = vec![0.0; vz];
        let mut ctx = 0;
        let mut lp = 0.0;
        for (l, &tok) in seq.iter().enumerate() {
            let off = self.prior_row_offset(l, x, ctx);
            log_softmax_into(self.row(off, vz), &mut buf);
            lp += buf[tok];
            if let Some(g) = grad.as_deref_mut() {
                for (j, &b) in buf.iter().enumerate() {
                    g.push(off + j, f64::from(u8::from(j == tok)) - b.exp());
                }
            }
            ctx = tok;
        }
        lp
    }

    /// Accumulate `log p(y|x,z)` and, when requested, its sparse gradient.
    fn output_terms(
        &self,
        x: usize,
        z: usize,
        y: &[usize],
        mut grad: Option<&mut SparseGrad>,
    ) -> f64 {
        let vy = self.dims.output_vocab;
        let mut buf = vec![0.0; vy];
        let mut ctx = 0;
        let mut lp = 0.0;
        for (t, &tok) in y.iter().enumerate() {
            let off = self.output_row_offset(t, x, z, ctx);
            log_softmax_into(self.row(off, vy), &mut buf);
            lp += buf[tok];
            if let Some(g) = grad.as_deref_mut() {
                for (j, &b) in buf.iter().enumerate() {
                    g.push(off + j, f64::from(u8::from(j == tok)) - b.exp());
                }
            }
            ctx = tok;
        }
        lp
    }

    /// `log p(z|x)` for a latent index.
    pub fn log_prior(&self, x: usize, z: usize) -> f64 {
        self.prior_terms(x, z, None)
    }

    /// `log p(y|x,z)` for a latent index.
    pub fn log_likelihood(&self, x: usize, z: usize, y: &[usize]) -> f64 {
        self.output_terms(x, z, y, None)
    }

    /// Weight and score pieces of one latent trajectory for the example's target.
    pub fn trajectory(&self, ex: &Example, z: usize) -> Trajectory {
        let mut prior = SparseGrad::default();
        let mut lik = SparseGrad::default();
        let log_prior = self.prior_terms(ex.input, z, Some(&mut prior));
        let log_w = self.output_terms(ex.input, z, &ex.target, Some(&mut lik));
        Trajectory {
            id: z,
            log_prior,
            log_w,
            prior,
            lik,
        }
    }

    /// Exact prior `p(z|x)` over all latent indices.
    pub fn prior_distribution(&self, x: usize) -> Result<Vec<f64>> {
        self.check_cap()?;
        Ok((0..self.n_latents)
            .map(|z| self.log_prior(x, z).exp())
            .collect())
    }

    /// `log p(z, y*|x)` for every latent index.
    pub fn log_joint_table(&self, ex: &Example) -> Result<Vec<f64>> {
        self.check_example(ex)?;
        self.check_cap()?;
        Ok((0..self.n_latents)
            .map(|z| self.log_prior(ex.input, z) + self.log_likelihood(ex.input, z, &ex.target))
            .collect())
    }

    /// Marginal by direct linear-space summation; only meaningful when nothing underflows.
    pub fn linear_marginal(&self, ex: &Example) -> Result<f64> {
        self.check_example(ex)?;
        self.check_cap()?;
        let mut total = 0.0;
        for z in 0..self.n_latents {
            let pz = self.log_prior(ex.input, z).exp();
            let py = self.log_likelihood(ex.input, z, &ex.target).exp();
            total += pz * py;
        }
        Ok(total)
    }

    /// Ancestral draw of a latent index from `p(z|x)`.
    pub fn sample_latent(&self, x: usize, stream: &mut Stream) -> usize {
        let vz = self.dims.latent_vocab;
        let mut ctx = 0;
        let mut z = 0;
        for l in 0..self.dims.latent_len {
            let probs = softmax(self.row(self.prior_row_offset(l, x, ctx), vz));
            let tok = stream.categorical(&probs);
            z = z * vz + tok;
            ctx = tok;
        }
        z
    }

    /// Ancestral draw of an output sequence from `p(y|x,z)`.
    pub fn sample_output(&self, x: usize, z: usize, stream: &mut Stream) -> Vec<usize> {
        let vy = self.dims.output_vocab;
        let mut ctx = 0;
        let mut y = Vec::with_capacity(self.dims.output_len);
        for t in 0..self.dims.output_len {
            let probs = softmax(self.row(self.output_row_offset(t, x, z, ctx), vy));
            let tok = stream.categorical(&probs);
            y.push(tok);
            ctx = tok;
        }
        y
    }
}

impl Model for LatentSeqModel {
    fn num_params(&self) -> usize {
        self.params.len()
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn log_marginal(&self, ex: &Example) -> Result<f64> {
        Ok(log_sum_exp(&self.log_joint_table(ex)?))
    }

    /// The score is the posterior-weighted sum of joint scores.
    fn log_marginal_score(&self, ex: &Example) -> Result<(f64, Vec<f64>)> {
        let lj = self.log_joint_table(ex)?;
        let lp = log_sum_exp(&lj);
        let mut s = vec![0.0; self.params.len()];
        if lp == f64::NEG_INFINITY {
            return Ok((lp, s));
        }
        for (z, &l) in lj.iter().enumerate() {
            let post = (l - lp).exp();
            if post == 0.0 {
                continue;
            }
            let tr = self.trajectory(ex, z);
            tr.prior.axpy(post, &mut s);
            tr.lik.axpy(post, &mut s);
        }
        Ok((lp, s))
    }
}

/// Draw `m` latent trajectories from the prior and record their likelihood weights.
pub fn sample_prior(
    model: &LatentSeqModel,
    ex: &Example,
    m: usize,
    stream: &mut Stream,
) -> Result<SamplePool> {
    if m == 0 {
        return Err(Error::Empty("sample_prior needs M >= 1"));
    }
    model.check_example(ex)?;
    let seed = stream.seed();
    let mut slot_of: BTreeMap<usize, usize> = BTreeMap::new();
    let mut slots = Vec::new();
    let mut members = Vec::with_capacity(m);
    for _ in 0..m {
        let z = model.sample_latent(ex.input, stream);
        let slot = *slot_of.entry(z).or_insert_with(|| {
            slots.push(model.trajectory(ex, z));
            slots.len() - 1
        });
        members.push(slot);
    }
    SamplePool::new(model.num_params(), seed, slots, members)
}

/// Monte Carlo exact-match reward next to the exact marginal.
pub fn expected_reward(
    model: &LatentSeqModel,
    ex: &Example,
    samples: usize,
    stream: &mut Stream,
) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(Error::Empty("expected_reward needs at least one sample"));
    }
    let exact = model.log_marginal(ex)?.exp();
    let mut hits = 0usize;
    for _ in 0..samples {
        let z = model.sample_latent(ex.input, stream);
        if model.sample_output(ex.input, z, stream) == ex.target {
            hits += 1;
        }
    }
    Ok((hits as f64 / samples as f64, exact))
}
