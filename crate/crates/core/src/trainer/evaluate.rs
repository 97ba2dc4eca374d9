//! Sampled evaluation: p@1, p@k and majority vote.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::models::{Example, LatentSeqModel};
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    pub p1: f64,
    pub pk: f64,
    pub majk: f64,
    /// Standard error of `p1` over all single draws.
    pub p1_se: f64,
}

/// Exact-match correctness.
pub fn exact_match(sample: &[usize], target: &[usize]) -> bool {
    sample == target
}

/// Containment match; for fixed-length outputs it coincides with [`exact_match`].
pub fn contains_match(sample: &[usize], target: &[usize]) -> bool {
    target.is_empty() || sample.windows(target.len()).any(|w| w == target)
}

/// Most frequent sequence; ties go to the lexicographically smallest.
pub fn majority(samples: &[Vec<usize>]) -> Option<&Vec<usize>> {
    let mut counts: BTreeMap<&Vec<usize>, usize> = BTreeMap::new();
    for s in samples {
        *counts.entry(s).or_default() += 1;
    }
    let mut best: Option<(&Vec<usize>, usize)> = None;
    for (s, c) in counts {
        if best.is_none_or(|(_, b)| c > b) {
            best = Some((s, c));
        }
    }
    best.map(|(s, _)| s)
}

/// For every example, `groups` independent groups of `k` ancestral samples.
/// p@1 averages correctness over all draws, p@k is the fraction of groups with
/// at least one correct draw and maj@k the fraction whose majority is correct.
pub fn evaluate(
    model: &LatentSeqModel,
    dataset: &[Example],
    k: usize,
    groups: usize,
    stream: &mut Stream,
) -> Result<EvalMetrics> {
    if k == 0 || groups == 0 {
        return Err(Error::Domain(
            "evaluation needs k >= 1 and at least one group".into(),
        ));
    }
    if dataset.is_empty() {
        return Err(Error::Empty("evaluation dataset is empty"));
    }
    let (mut hits, mut any, mut maj, mut draws, mut n_groups) =
        (0usize, 0usize, 0usize, 0usize, 0usize);
    let mut samples = Vec::with_capacity(k);
    for ex in dataset {
        model.check_example(ex)?;
        for _ in 0..groups {
            samples.clear();
            for _ in 0..k {
                let z = model.sample_latent(ex.input, stream);
                samples.push(model.sample_output(ex.input, z, stream));
            }
            let correct = samples
                .iter()
                .filter(|s| exact_match(s, &ex.target))
                .count();
            hits += correct;
            any += usize::from(correct > 0);
            maj += usize::from(majority(&samples).is_some_and(|s| exact_match(s, &ex.target)));
            draws += k;
            n_groups += 1;
        }
    }
    let p1 = hits as f64 / draws as f64;
    Ok(EvalMetrics {
        p1,
        pk: any as f64 / n_groups as f64,
        majk: maj as f64 / n_groups as f64,
        p1_se: (p1 * (1.0 - p1) / draws as f64).sqrt(),
    })
}
