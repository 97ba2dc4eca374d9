//! Independent numerical minimizer of the categorical objective
//! `sum_j alpha_j * l_q(theta_j)` over the simplex.
//!
//! Cyclic pairwise descent: each move re-splits the mass of a pair
//! `(theta_i, theta_j)` by golden-section search on the objective restricted to
//! that pair. The objective is separable and convex, so sweeps converge to the
//! unique minimizer for `q > 0`. Only loss values are evaluated.

use crate::error::{Error, Result};
use crate::qcore::{QParam, SimplexPoint};

const GOLDEN: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub max_sweeps: usize,
    /// Stop once two consecutive sweeps move no coordinate by more than
    /// this. Golden-section search resolves a flat minimum only to about
    /// `sqrt(eps)` relative, so values much below 1e-8 never trigger.
    pub tol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 20_000,
            tol: 1e-7,
        }
    }
}

fn loss(q: f64, u: f64) -> f64 {
    if q == 1.0 {
        -u.ln()
    } else {
        (1.0 - u.powf(1.0 - q)) / (1.0 - q)
    }
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (a.abs() + b.abs()) + 1e-300 {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Minimize the categorical objective numerically, starting from uniform.
pub fn minimize_categorical(
    alpha: &SimplexPoint,
    q: QParam,
    opts: OracleOptions,
) -> Result<Vec<f64>> {
    let a = alpha.weights();
    let k = a.len();
    let qq = q.get();
    let mut theta = vec![1.0 / k as f64; k];
    let mut quiet = 0;
    for _ in 0..opts.max_sweeps {
        let mut moved: f64 = 0.0;
        for i in 0..k {
            for j in i + 1..k {
                let s = theta[i] + theta[j];
                if s <= 0.0 {
                    continue;
                }
                let f = |t: f64| a[i] * loss(qq, t) + a[j] * loss(qq, s - t);
                let t = golden_min(f, 0.0, s);
                moved = moved.max((t - theta[i]).abs());
                theta[i] = t;
                theta[j] = s - t;
            }
        }
        quiet = if moved <= opts.tol { quiet + 1 } else { 0 };
        if quiet == 2 {
            let total: f64 = theta.iter().sum();
            return Ok(theta.into_iter().map(|t| t / total).collect());
        }
    }
    Err(Error::Numerical(format!(
        "pairwise descent did not settle in {} sweeps",
        opts.max_sweeps
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_alpha_at_q1() {
        let alpha = SimplexPoint::new(vec![0.5, 0.3, 0.2]).unwrap();
        let t = minimize_categorical(&alpha, QParam::ONE, OracleOptions::default()).unwrap();
        for (x, y) in t.iter().zip(alpha.weights()) {
            assert!((x - y).abs() < 1e-7);
        }
    }

    #[test]
    fn two_point_half() {
        // stationarity: 0.8 a^-1/2 = 0.2 b^-1/2 gives a/b = 16
        let alpha = SimplexPoint::new(vec![0.8, 0.2]).unwrap();
        let t = minimize_categorical(&alpha, QParam::new(0.5).unwrap(), OracleOptions::default())
            .unwrap();
        assert!((t[0] - 16.0 / 17.0).abs() < 1e-7);
    }

    #[test]
    fn q0_goes_to_the_vertex() {
        let alpha = SimplexPoint::new(vec![0.2, 0.5, 0.3]).unwrap();
        let t = minimize_categorical(&alpha, QParam::ZERO, OracleOptions::default()).unwrap();
        assert!((t[1] - 1.0).abs() < 1e-7);
    }
}
