use super::{Example, GradMeta, GradientVector, Model};
use crate::error::{Error, Result};
use crate::numeric::{log_sigmoid, log_softmax_into, sigmoid};
use crate::qcore::{QParam, SimplexPoint};

/// Scalar model with `P(y = 1) = sigma(theta)`. Target `[1]` is success,
/// target `[0]` scores the complementary outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmoidModel {
    theta: [f64; 1],
}

impl SigmoidModel {
    pub fn new(theta: f64) -> Self {
        Self { theta: [theta] }
    }

    pub fn theta(&self) -> f64 {
        self.theta[0]
    }

    pub fn success_prob(&self) -> f64 {
        sigmoid(self.theta[0])
    }
}

impl Model for SigmoidModel {
    fn num_params(&self) -> usize {
        1
    }

    fn params(&self) -> &[f64] {
        &self.theta
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn log_marginal_score(&self, ex: &Example) -> Result<(f64, Vec<f64>)> {
        let t = self.theta[0];
        match ex.target.as_slice() {
            [1] => Ok((log_sigmoid(t), vec![sigmoid(-t)])),
            [0] => Ok((log_sigmoid(-t), vec![-sigmoid(t)])),
            other => Err(Error::Shape(format!(
                "sigmoid target must be [0] or [1], got {other:?}"
            ))),
        }
    }
}

/// Softmax over K categories, paired with the empirical target frequencies
/// `alpha` that define the categorical objective.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalModel {
    logits: Vec<f64>,
    alpha: SimplexPoint,
}

impl CategoricalModel {
    pub fn new(logits: Vec<f64>, alpha: SimplexPoint) -> Result<Self> {
        if logits.len() != alpha.len() {
            return Err(Error::Shape(format!(
                "{} logits for {} categories",
                logits.len(),
                alpha.len()
            )));
        }
        Ok(Self { logits, alpha })
    }

    /// Logits `ln theta`, so that the predicted distribution equals `theta`.
    pub fn from_probs(theta: &SimplexPoint, alpha: SimplexPoint) -> Result<Self> {
        Self::new(theta.weights().iter().map(|t| t.ln()).collect(), alpha)
    }

    pub fn alpha(&self) -> &SimplexPoint {
        &self.alpha
    }

    pub fn predicted(&self) -> Vec<f64> {
        crate::numeric::softmax(&self.logits)
    }

    /// Gradient of `sum_j alpha_j * l_q(theta_j)` with respect to the logits.
    pub fn objective_grad(&self, q: QParam) -> Result<GradientVector> {
        let mut out = vec![0.0; self.logits.len()];
        for (j, &a) in self.alpha.weights().iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let g = super::exact_grad_loss(self, &Example::new(0, vec![j]), q)?;
            for (o, v) in out.iter_mut().zip(&g.values) {
                *o += a * v;
            }
        }
        Ok(GradientVector {
            values: out,
            meta: GradMeta::exact("categorical_objective_grad", Some(q.get())),
        })
    }
}

impl Model for CategoricalModel {
    fn num_params(&self) -> usize {
        self.logits.len()
    }

    fn params(&self) -> &[f64] {
        &self.logits
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    fn log_marginal_score(&self, ex: &Example) -> Result<(f64, Vec<f64>)> {
        let j = match ex.target.as_slice() {
            [j] if *j < self.logits.len() => *j,
            other => {
                return Err(Error::Shape(format!(
                    "categorical target {other:?} out of range"
                )))
            }
        };
        let mut ls = vec![0.0; self.logits.len()];
        log_softmax_into(&self.logits, &mut ls);
        let s = ls
            .iter()
            .enumerate()
            .map(|(k, l)| f64::from(u8::from(k == j)) - l.exp())
            .collect();
        Ok((ls[j], s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{
        exact_grad_loss, finite_diff_grad, loss_gradients, score, DEFAULT_FD_STEP,
    };
    use crate::qcore::escort_minimizer;
    use approx::assert_relative_eq;

    fn q(v: f64) -> QParam {
        QParam::new(v).unwrap()
    }

    fn success() -> Example {
        Example::new(0, vec![1])
    }

    #[test]
    fn sigmoid_gradients_at_zero() {
        let m = SigmoidModel::new(0.0);
        assert_relative_eq!(
            exact_grad_loss(&m, &success(), q(0.0)).unwrap().values[0],
            -0.25,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            exact_grad_loss(&m, &success(), q(1.0)).unwrap().values[0],
            -0.5,
            max_relative = 1e-15
        );
        let g = exact_grad_loss(&m, &success(), q(0.5)).unwrap().values[0];
        assert_relative_eq!(g, -0.25 * 0.5f64.powf(-0.5), max_relative = 1e-14);
        assert!((g + 0.353553).abs() < 1e-6);
    }

    #[test]
    fn sigmoid_finite_differences() {
        let m = SigmoidModel::new(0.0);
        let fd = finite_diff_grad(&m, &success(), q(0.0), 1e-5).unwrap();
        assert!((fd.values[0] + 0.25).abs() < 1e-9);
        let fd = finite_diff_grad(&m, &success(), q(1.0), 1e-6).unwrap();
        assert!((fd.values[0] + 0.5).abs() < 1e-8);
        let fd = finite_diff_grad(&m, &success(), q(0.5), 1e-6).unwrap();
        assert!((fd.values[0] + 0.353553).abs() < 1e-6);
        for &t in &[-6.0, -1.0, 0.3, 4.0] {
            let m = SigmoidModel::new(t);
            for &qq in &[0.0, 0.3, 0.7, 1.0] {
                let e = exact_grad_loss(&m, &success(), q(qq)).unwrap();
                let f = finite_diff_grad(&m, &success(), q(qq), DEFAULT_FD_STEP).unwrap();
                assert!((e.values[0] - f.values[0]).abs() <= 1e-5 * e.values[0].abs().max(1e-8));
            }
        }
    }

    #[test]
    fn sigmoid_score_norm() {
        for &t in &[-3.0, 0.0, 2.5] {
            let m = SigmoidModel::new(t);
            let s = score(&m, &success()).unwrap().values[0];
            let p = m.success_prob();
            assert_relative_eq!(s * s, (1.0 - p) * (1.0 - p), max_relative = 1e-12);
        }
        assert_relative_eq!(
            score(&SigmoidModel::new(0.0), &success()).unwrap().values[0].powi(2),
            0.25
        );
        assert!(score(&SigmoidModel::new(40.0), &success()).unwrap().values[0] < 1e-17);
    }

    #[test]
    fn sigmoid_cold_zero() {
        let m = SigmoidModel::new(-800.0);
        assert!(matches!(
            exact_grad_loss(&m, &success(), q(0.5)),
            Err(Error::ColdZero(_))
        ));
    }

    #[test]
    fn sigmoid_factorizations() {
        let m = SigmoidModel::new(-2.3);
        let g = loss_gradients(&m, &success(), q(0.4)).unwrap();
        assert_relative_eq!(
            g.grad_lq[0],
            g.p.powf(-0.4) * g.grad_l0[0],
            max_relative = 1e-13
        );
        assert_relative_eq!(
            g.grad_lq[0],
            g.p.powf(0.6) * g.grad_l1[0],
            max_relative = 1e-13
        );
    }

    #[test]
    fn zero_gradient_at_escort_minimizer() {
        let alpha = SimplexPoint::new(vec![0.5, 0.3, 0.2]).unwrap();
        for &qq in &[0.2, 0.5, 0.9, 1.0] {
            let theta = escort_minimizer(&alpha, q(qq)).unwrap();
            let m = CategoricalModel::from_probs(&theta, alpha.clone()).unwrap();
            assert!(m.objective_grad(q(qq)).unwrap().max_abs() < 1e-6);
            // away from the minimizer the gradient is not small
            let off = CategoricalModel::new(vec![0.0; 3], alpha.clone()).unwrap();
            assert!(off.objective_grad(q(qq)).unwrap().max_abs() > 1e-3);
        }
    }

    #[test]
    fn categorical_rejects_bad_target() {
        let m = CategoricalModel::new(vec![0.0, 0.0], SimplexPoint::new(vec![0.5, 0.5]).unwrap())
            .unwrap();
        assert!(m.log_marginal_score(&Example::new(0, vec![2])).is_err());
    }
}
