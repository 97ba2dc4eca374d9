//! Closed-form mathematics of the J_Q loss family: the Tsallis q-logarithm,
//! the per-example loss, the dataset objective, the dispersion (Jensen) bound
//! and the escort minimizer of the categorical model.

use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;

/// Below this distance from q = 1 the q-logarithm is evaluated as
/// `expm1((1-q) ln u) / (1-q)` to avoid cancellation.
pub const Q_NEAR_ONE: f64 = 1e-4;

/// Simplex points within this distance of unit mass are accepted unchanged.
pub const SIMPLEX_TOL: f64 = 1e-12;
/// Simplex points within this distance are renormalized; beyond it they are rejected.
pub const SIMPLEX_RENORM_TOL: f64 = 1e-9;

/// The commitment parameter q in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct QParam(f64);

impl QParam {
    pub fn new(q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::QOutOfRange(q));
        }
        Ok(Self(q))
    }

    pub const ZERO: QParam = QParam(0.0);
    pub const ONE: QParam = QParam(1.0);

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for QParam {
    type Error = Error;
    fn try_from(q: f64) -> Result<Self> {
        QParam::new(q)
    }
}

/// A strictly positive success probability.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SuccessProb(f64);

impl SuccessProb {
    /// Exactly zero maps to [`Error::ColdZero`]; anything else outside (0, 1] is a domain error.
    pub fn new(p: f64) -> Result<Self> {
        if p == 0.0 {
            return Err(Error::ColdZero("success probability evaluated at 0".into()));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::ProbabilityDomain(p));
        }
        Ok(Self(p))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// A point on the probability simplex with K >= 2 entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::Simplex(format!(
                "need K >= 2 entries, got {}",
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::Simplex(format!(
                "entry {w} is negative or non-finite"
            )));
        }
        let sum: f64 = weights.iter().sum();
        let drift = (sum - 1.0).abs();
        if drift <= SIMPLEX_TOL {
            Ok(Self(weights))
        } else if drift < SIMPLEX_RENORM_TOL {
            Ok(Self(weights.into_iter().map(|w| w / sum).collect()))
        } else {
            Err(Error::Simplex(format!("entries sum to {sum}")))
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Tsallis q-logarithm `(u^(1-q) - 1) / (1-q)`, with `log_1 = ln`.
pub fn q_log(u: f64, q: QParam) -> Result<f64> {
    let u = SuccessProb::new(u)?.get();
    let a = 1.0 - q.get();
    if a == 0.0 {
        return Ok(u.ln());
    }
    if a.abs() < Q_NEAR_ONE {
        return Ok((a * u.ln()).exp_m1() / a);
    }
    Ok((u.powf(a) - 1.0) / a)
}

/// Per-example loss `-log_q(p)`; 0 at p = 1 and bounded by `1/(1-q)` for q < 1.
pub fn loss_q(p: SuccessProb, q: QParam) -> Result<f64> {
    Ok(-q_log(p.get(), q)?)
}

/// Mean per-example loss over a dataset of success probabilities.
pub fn dataset_loss(probs: &[SuccessProb], q: QParam) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::Empty("dataset_loss needs at least one example"));
    }
    let mut total = 0.0;
    for &p in probs {
        total += loss_q(p, q)?;
    }
    Ok(total / probs.len() as f64)
}

/// The Jensen gap of the dataset objective against the loss of the mean
/// success probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionBound {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

pub fn dispersion_bound_check(probs: &[SuccessProb], q: QParam) -> Result<DispersionBound> {
    if q.get() == 0.0 {
        return Err(Error::Domain("dispersion bound requires q > 0".into()));
    }
    let lhs = dataset_loss(probs, q)?;
    let mean = probs.iter().map(|p| p.get()).sum::<f64>() / probs.len() as f64;
    let rhs = loss_q(SuccessProb::new(mean)?, q)?;
    Ok(DispersionBound {
        lhs,
        rhs,
        gap: lhs - rhs,
    })
}

/// Minimizer of `sum_j alpha_j * (-log_q theta_j)` over the simplex.
///
/// For q > 0 this is the escort distribution of order 1/q, computed in log
/// space. At q = 0 the objective is linear and the vertex at the first index
/// of the maximum of alpha is returned.
pub fn escort_minimizer(alpha: &SimplexPoint, q: QParam) -> Result<SimplexPoint> {
    let a = alpha.weights();
    if q.get() == 0.0 {
        let mut best = 0;
        for (j, &w) in a.iter().enumerate() {
            if w > a[best] {
                best = j;
            }
        }
        let mut v = vec![0.0; a.len()];
        v[best] = 1.0;
        return SimplexPoint::new(v);
    }
    if let Some(j) = a.iter().position(|&w| w <= 0.0) {
        return Err(Error::Domain(format!("alpha[{j}] = 0 with q > 0")));
    }
    let scaled: Vec<f64> = a.iter().map(|w| w.ln() / q.get()).collect();
    let lse = log_sum_exp(&scaled);
    let mut theta: Vec<f64> = scaled.iter().map(|s| (s - lse).exp()).collect();
    let sum: f64 = theta.iter().sum();
    theta.iter_mut().for_each(|t| *t /= sum);
    SimplexPoint::new(theta)
}

/// Categorical objective `sum_j alpha_j * (-log_q theta_j)`; infinite when a
/// supported category has theta_j = 0 at q = 1.
pub fn categorical_objective(alpha: &SimplexPoint, theta: &[f64], q: QParam) -> f64 {
    alpha
        .weights()
        .iter()
        .zip(theta)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, &t)| match q_log(t, q) {
            Ok(v) => -a * v,
            Err(_) if q.get() < 1.0 && t == 0.0 => a / (1.0 - q.get()),
            Err(_) => f64::INFINITY,
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn q(v: f64) -> QParam {
        QParam::new(v).unwrap()
    }
    fn p(v: f64) -> SuccessProb {
        SuccessProb::new(v).unwrap()
    }

    #[test]
    fn qparam_rejects_out_of_range() {
        assert!(QParam::new(-1e-12).is_err());
        assert!(QParam::new(1.0 + 1e-12).is_err());
        assert!(QParam::new(f64::NAN).is_err());
        assert!(QParam::new(0.0).is_ok() && QParam::new(1.0).is_ok());
    }

    #[test]
    fn success_prob_zero_is_cold_zero() {
        assert!(matches!(SuccessProb::new(0.0), Err(Error::ColdZero(_))));
        assert!(matches!(
            SuccessProb::new(-0.1),
            Err(Error::ProbabilityDomain(_))
        ));
        assert!(matches!(
            SuccessProb::new(1.5),
            Err(Error::ProbabilityDomain(_))
        ));
    }

    #[test]
    fn q_log_examples() {
        assert_eq!(q_log(1.0, q(0.37)).unwrap(), 0.0);
        assert_relative_eq!(
            q_log((-1f64).exp(), q(1.0)).unwrap(),
            -1.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(q_log(0.25, q(0.5)).unwrap(), -1.0, max_relative = 1e-15);
        assert!(q_log(0.0, q(0.5)).is_err());
        assert!(q_log(1.2, q(0.5)).is_err());
        assert!(q_log(-0.2, q(0.5)).is_err());
    }

    #[test]
    fn loss_examples() {
        assert_relative_eq!(loss_q(p(0.3), q(0.0)).unwrap(), 0.7, max_relative = 1e-15);
        assert_eq!(loss_q(p(1.0), q(0.8)).unwrap(), 0.0);
        assert_relative_eq!(loss_q(p(0.25), q(0.5)).unwrap(), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn dataset_loss_examples() {
        assert_eq!(dataset_loss(&[p(1.0); 3], q(0.5)).unwrap(), 0.0);
        assert_relative_eq!(
            dataset_loss(&[p(0.3)], q(0.0)).unwrap(),
            0.7,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            dataset_loss(&[p(0.25), p(1.0)], q(0.5)).unwrap(),
            0.5,
            max_relative = 1e-15
        );
        assert!(matches!(dataset_loss(&[], q(0.5)), Err(Error::Empty(_))));
    }

    #[test]
    fn dispersion_examples() {
        let b = dispersion_bound_check(&[p(0.4), p(0.4)], q(0.5)).unwrap();
        assert!(b.gap.abs() < 1e-15);
        let b = dispersion_bound_check(&[p(0.1), p(0.9)], q(1.0)).unwrap();
        let expected = -(0.1f64.ln() + 0.9f64.ln()) / 2.0 + 0.5f64.ln();
        assert_relative_eq!(b.gap, expected, max_relative = 1e-12);
        assert!(b.gap > 0.0);
        let b = dispersion_bound_check(&[p(0.2); 3], q(0.25)).unwrap();
        assert!(b.gap.abs() < 1e-15);
        assert!(dispersion_bound_check(&[p(0.2)], q(0.0)).is_err());
    }

    #[test]
    fn escort_examples() {
        let half = SimplexPoint::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(
            escort_minimizer(&half, q(0.5)).unwrap().weights(),
            &[0.5, 0.5]
        );
        let a = SimplexPoint::new(vec![0.8, 0.2]).unwrap();
        let t = escort_minimizer(&a, q(1.0)).unwrap();
        assert_relative_eq!(t.weights()[0], 0.8, max_relative = 1e-15);
        assert_relative_eq!(t.weights()[1], 0.2, max_relative = 1e-14);
        let t = escort_minimizer(&a, q(0.5)).unwrap();
        // 0.64 / 0.68 and 0.04 / 0.68
        assert_relative_eq!(t.weights()[0], 16.0 / 17.0, max_relative = 1e-14);
        assert_relative_eq!(t.weights()[1], 1.0 / 17.0, max_relative = 1e-14);
        assert!((t.weights()[0] - 0.94118).abs() < 1e-5);
        assert_eq!(escort_minimizer(&a, q(0.0)).unwrap().weights(), &[1.0, 0.0]);
    }

    #[test]
    fn escort_vertex_tie_breaks_low() {
        let a = SimplexPoint::new(vec![0.1, 0.45, 0.45]).unwrap();
        assert_eq!(
            escort_minimizer(&a, q(0.0)).unwrap().weights(),
            &[0.0, 1.0, 0.0]
        );
    }

    #[test]
    fn escort_rejects_zero_entry() {
        let a = SimplexPoint::new(vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            escort_minimizer(&a, q(0.3)),
            Err(Error::Domain(_))
        ));
        assert!(escort_minimizer(&a, q(0.0)).is_ok());
    }

    #[test]
    fn simplex_tolerances() {
        assert!(SimplexPoint::new(vec![0.5, 0.5 + 1e-13]).is_ok());
        let s = SimplexPoint::new(vec![0.5, 0.5 + 1e-10]).unwrap();
        assert!((s.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(SimplexPoint::new(vec![0.5, 0.5 + 1e-8]).is_err());
        assert!(SimplexPoint::new(vec![1.0]).is_err());
        assert!(SimplexPoint::new(vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn continuity_near_one() {
        for &u in &[1e-6, 0.01, 0.3, 0.9, 0.999] {
            let l = q_log(u, q(1.0)).unwrap();
            // the analytic gap is about (1-q) |ln u| / 2 relative
            for k in 9..=15 {
                let v = q_log(u, q(1.0 - 10f64.powi(-k))).unwrap();
                assert!(((v - l) / l).abs() < 1e-8, "u={u} k={k}: {v} vs {l}");
            }
        }
    }

    proptest! {
        #[test]
        fn loss_is_bounded_and_nonnegative(pp in 1e-12f64..=1.0, qq in 0.0f64..0.999) {
            let l = loss_q(p(pp), q(qq)).unwrap();
            prop_assert!(l >= 0.0);
            prop_assert!(l <= 1.0 / (1.0 - qq) + 1e-12);
        }

        #[test]
        fn jensen_gap_nonnegative(ps in prop::collection::vec(1e-6f64..=1.0, 1..8), qq in 0.01f64..=1.0) {
            let probs: Vec<_> = ps.iter().map(|&v| p(v)).collect();
            let b = dispersion_bound_check(&probs, q(qq)).unwrap();
            prop_assert!(b.gap >= -1e-12 * b.lhs.abs().max(1.0));
        }

        #[test]
        fn monotone_sharpening(raw in prop::collection::vec(0.05f64..1.0, 2..6), q1 in 0.05f64..1.0, frac in 0.05f64..0.95) {
            let s: f64 = raw.iter().sum();
            let alpha = SimplexPoint::new(raw.iter().map(|r| r / s).collect()).unwrap();
            let q2 = q1 * frac;
            let hi = escort_minimizer(&alpha, q(q1)).unwrap();
            let lo = escort_minimizer(&alpha, q(q2)).unwrap();
            let a = alpha.weights();
            for j in 0..a.len() {
                for k in 0..a.len() {
                    if a[j] > a[k] * (1.0 + 1e-9) {
                        let r_lo = (a[j] / a[k]).ln() / q2;
                        let r_hi = (a[j] / a[k]).ln() / q1;
                        prop_assert!(r_lo > r_hi);
                        // ratios on the computed points, when representable
                        if lo.weights()[k] > 1e-300 && hi.weights()[k] > 1e-300 {
                            prop_assert!(lo.weights()[j] / lo.weights()[k] > hi.weights()[j] / hi.weights()[k]);
                        }
                    }
                }
            }
        }

        #[test]
        fn properness_only_at_one(raw in prop::collection::vec(0.05f64..1.0, 2..6), qq in 0.05f64..0.99) {
            let s: f64 = raw.iter().sum();
            let alpha = SimplexPoint::new(raw.iter().map(|r| r / s).collect()).unwrap();
            let uniform = alpha.weights().iter().all(|w| (w - alpha.weights()[0]).abs() < 1e-3);
            prop_assume!(!uniform);
            let at_one = escort_minimizer(&alpha, q(1.0)).unwrap();
            for (t, a) in at_one.weights().iter().zip(alpha.weights()) {
                prop_assert!((t - a).abs() < 1e-12);
            }
            let other = escort_minimizer(&alpha, q(qq)).unwrap();
            let dev = other.weights().iter().zip(alpha.weights()).map(|(t, a)| (t - a).abs()).fold(0.0, f64::max);
            prop_assert!(dev > 1e-12);
        }
    }
}
