//! Toy tasks with a prescribed initial success probability.
//!
//! Every input `x` has one target `y*(x)`. Output logits are `tau * B` where,
//! in each output row for position `t`, `B` is `-1` on `y*_t(x)` and uniform
//! on `[0, 1)` elsewhere, so every target-token probability is strictly
//! decreasing in `tau` and `tau = 0` is the uniform model. Prior logits are
//! fixed uniform draws on `[-1, 1)`. `tau` is solved so the mean exact
//! marginal over the dataset hits the requested `p0`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::models::{write_model, AnyModel, Example, LatentDims, LatentSeqModel, Model};
use crate::numeric::brent_root;
use crate::rng::Stream;

/// Dimensions of the cold and warm tasks, with `n_inputs` examples.
pub fn task_dims(n_inputs: usize) -> LatentDims {
    LatentDims {
        n_inputs,
        latent_vocab: 2,
        latent_len: 2,
        output_vocab: 4,
        output_len: 2,
    }
}

pub const DEFAULT_EXAMPLES: usize = 32;
/// Largest `|tau|` searched.
pub const TAU_MAX: f64 = 60.0;
/// Relative accuracy of the solved mean marginal; the contract is 5%.
pub const P0_RTOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub model: LatentSeqModel,
    pub dataset: Vec<Example>,
    pub tau: f64,
    pub seed: u64,
}

impl Task {
    pub fn mean_marginal(&self) -> Result<f64> {
        mean_marginal(&self.model, &self.dataset)
    }

    /// Canonical text: the model followed by one `example` line per example.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut s = write_model(&AnyModel::Latent(self.model.clone()));
        for ex in &self.dataset {
            let t: Vec<String> = ex.target.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(
                s,
                "example {} {} {}",
                ex.input,
                t.join(","),
                u8::from(ex.corrupted)
            );
        }
        s.into_bytes()
    }
}

pub fn mean_marginal<M: Model + ?Sized>(model: &M, dataset: &[Example]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset has no examples"));
    }
    let mut total = 0.0;
    for ex in dataset {
        total += model.log_marginal(ex)?.exp();
    }
    Ok(total / dataset.len() as f64)
}

struct Template {
    dims: LatentDims,
    prior: Vec<f64>,
    b: Vec<f64>,
    dataset: Vec<Example>,
}

impl Template {
    fn new(dims: LatentDims, seed: u64) -> Result<Self> {
        let mut s = Stream::derive(seed, "task", 0);
        let base = LatentSeqModel::zeros(dims)?;
        let dataset: Vec<Example> = (0..dims.n_inputs)
            .map(|x| {
                let target = (0..dims.output_len)
                    .map(|_| s.categorical(&vec![1.0; dims.output_vocab]))
                    .collect();
                Example::new(x, target)
            })
            .collect();
        let prior: Vec<f64> = base
            .prior_range()
            .map(|_| 2.0 * s.uniform() - 1.0)
            .collect();
        let nz = base.num_latents();
        let vy = dims.output_vocab;
        let mut b = Vec::with_capacity(base.output_range().len());
        for t in 0..dims.output_len {
            let contexts = if t == 0 { 1 } else { vy };
            for ex in &dataset {
                for _z in 0..nz {
                    for _ctx in 0..contexts {
                        for j in 0..vy {
                            b.push(if j == ex.target[t] { -1.0 } else { s.uniform() });
                        }
                    }
                }
            }
        }
        Ok(Self {
            dims,
            prior,
            b,
            dataset,
        })
    }

    fn model(&self, tau: f64) -> Result<LatentSeqModel> {
        let mut params = self.prior.clone();
        params.extend(self.b.iter().map(|v| tau * v));
        LatentSeqModel::new(self.dims, params)
    }

    fn log_mean(&self, tau: f64) -> Result<f64> {
        Ok(mean_marginal(&self.model(tau)?, &self.dataset)?.ln())
    }
}

/// Task with mean exact marginal within [`P0_RTOL`] of `p0`.
pub fn make_task(n_examples: usize, p0: f64, seed: u64) -> Result<Task> {
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::Domain(format!("p0 = {p0} is outside (0, 1)")));
    }
    let tpl = Template::new(task_dims(n_examples), seed)?;
    let target = p0.ln();
    let at_zero = tpl.log_mean(0.0)? - target;
    let unreachable = |why: &str| Error::UnreachableTarget {
        target: p0,
        reason: why.into(),
    };
    let tau = if at_zero.abs() <= P0_RTOL {
        0.0
    } else {
        let edge = if at_zero > 0.0 { TAU_MAX } else { -TAU_MAX };
        let at_edge = tpl.log_mean(edge)? - target;
        if at_edge.signum() == at_zero.signum() {
            return Err(unreachable(
                "outside the range of the logit temperature search",
            ));
        }
        let f = |tau: f64| tpl.log_mean(tau).map(|v| v - target).unwrap_or(f64::NAN);
        let (a, b) = if edge > 0.0 { (0.0, edge) } else { (edge, 0.0) };
        brent_root(f, a, b, 1e-13, 300)?
    };
    let model = tpl.model(tau)?;
    let achieved = mean_marginal(&model, &tpl.dataset)?;
    if (achieved / p0 - 1.0).abs() > 0.05 {
        return Err(unreachable("temperature search did not converge"));
    }
    Ok(Task {
        model,
        dataset: tpl.dataset,
        tau,
        seed,
    })
}

/// Cold-start task, `p0` in `(1e-6, 1e-2)`.
pub fn make_cold_task(p0: f64, seed: u64) -> Result<Task> {
    if !(p0 > 1e-6 && p0 < 1e-2) {
        return Err(Error::Domain(format!(
            "cold-start p0 = {p0} is outside (1e-6, 1e-2)"
        )));
    }
    make_task(DEFAULT_EXAMPLES, p0, seed)
}

/// Warm-start task, typically `p0` around 0.3.
pub fn make_warm_task(p0: f64, seed: u64) -> Result<Task> {
    make_task(DEFAULT_EXAMPLES, p0, seed)
}

/// Task described by a training config. The task seed derives from
/// `cfg.seed`, so sweeps that vary only the training seed share one task
/// when built from the base config.
pub fn task_for_config(cfg: &crate::trainer::TrainConfig) -> Result<Task> {
    let seed = crate::rng::derive_seed(cfg.seed, "task", 0);
    let n = cfg.task.examples.unwrap_or(DEFAULT_EXAMPLES);
    if n == 0 {
        return Err(Error::Config("task.examples must be at least 1".into()));
    }
    match cfg.scenario {
        crate::trainer::Scenario::Cold if !(cfg.task.p0 > 1e-6 && cfg.task.p0 < 1e-2) => {
            Err(Error::Config(format!(
                "cold-start task.p0 = {} is outside (1e-6, 1e-2)",
                cfg.task.p0
            )))
        }
        _ => make_task(n, cfg.task.p0, seed),
    }
}

/// Uniform model over `n_inputs` inputs with `copies` examples each; in
/// every input a fraction `eps` of the copies carries one shared corrupted
/// target instead of the clean one.
pub fn make_noisy_task(n_inputs: usize, copies: usize, eps: f64, seed: u64) -> Result<Task> {
    if !(0.0..1.0).contains(&eps) || copies == 0 {
        return Err(Error::Domain(format!(
            "noise fraction {eps} with {copies} copies"
        )));
    }
    let dims = task_dims(n_inputs);
    let model = LatentSeqModel::zeros(dims)?;
    let mut s = Stream::derive(seed, "noisy-task", 0);
    let n_bad = (eps * copies as f64).round() as usize;
    let n_targets = dims.output_vocab.pow(dims.output_len as u32);
    let seq = |mut code: usize| {
        let mut v = vec![0; dims.output_len];
        for slot in v.iter_mut().rev() {
            *slot = code % dims.output_vocab;
            code /= dims.output_vocab;
        }
        v
    };
    let mut dataset = Vec::with_capacity(n_inputs * copies);
    for x in 0..n_inputs {
        let clean = s.categorical(&vec![1.0; n_targets]);
        let shift = 1 + s.categorical(&vec![1.0; n_targets - 1]);
        let bad = (clean + shift) % n_targets;
        for c in 0..copies {
            let corrupted = c < n_bad;
            let code = if corrupted { bad } else { clean };
            dataset.push(Example {
                input: x,
                target: seq(code),
                corrupted,
            });
        }
    }
    Ok(Task {
        model,
        dataset,
        tau: 0.0,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cold_task_hits_p0() {
        let t = make_cold_task(1e-3, 1).unwrap();
        let m = t.mean_marginal().unwrap();
        assert!((0.95e-3..=1.05e-3).contains(&m), "{m}");
        assert!(t.tau > 0.0);
        assert_eq!(t.dataset.len(), DEFAULT_EXAMPLES);
    }

    #[test]
    fn chance_level_gives_zero_temperature() {
        let t = make_task(8, 1.0 / 16.0, 3).unwrap();
        assert!(t.tau.abs() < 1e-9, "{}", t.tau);
    }

    #[test]
    fn warm_task_uses_negative_temperature() {
        let t = make_warm_task(0.3, 2).unwrap();
        assert!(t.tau < 0.0);
        assert!((t.mean_marginal().unwrap() / 0.3 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn same_seed_same_bytes() {
        assert_eq!(
            make_cold_task(1e-4, 9).unwrap().to_bytes(),
            make_cold_task(1e-4, 9).unwrap().to_bytes()
        );
        assert_ne!(
            make_cold_task(1e-4, 9).unwrap().to_bytes(),
            make_cold_task(1e-4, 10).unwrap().to_bytes()
        );
    }

    #[test]
    fn out_of_range_p0() {
        assert!(make_cold_task(0.5, 1).is_err());
        assert!(make_cold_task(1e-7, 1).is_err());
        assert!(matches!(
            make_task(4, 1e-200, 1),
            Err(Error::UnreachableTarget { .. })
        ));
    }

    #[test]
    fn noisy_task_layout() {
        let t = make_noisy_task(3, 10, 0.2, 4).unwrap();
        assert_eq!(t.dataset.len(), 30);
        assert_eq!(t.dataset.iter().filter(|e| e.corrupted).count(), 6);
        for x in 0..3 {
            let rows: Vec<&Example> = t.dataset.iter().filter(|e| e.input == x).collect();
            let clean: Vec<_> = rows
                .iter()
                .filter(|e| !e.corrupted)
                .map(|e| e.target.clone())
                .collect();
            let bad: Vec<_> = rows
                .iter()
                .filter(|e| e.corrupted)
                .map(|e| e.target.clone())
                .collect();
            assert!(clean.windows(2).all(|w| w[0] == w[1]));
            assert!(bad.windows(2).all(|w| w[0] == w[1]));
            assert_ne!(clean[0], bad[0]);
        }
    }
}
