//! Scalar adaptive Dormand-Prince 5(4) integrator with cubic Hermite dense
//! output on each accepted step.

use crate::error::{Error, Result};
use crate::numeric::brent_root;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Where the flow contracts (`df/dy = J < 0`), cap the step at
    /// `stiff_cap / |J|`. Below 2.5 the Dormand-Prince stability function
    /// stays in (0, 1), so deviations from an equilibrium decay without
    /// overshoot instead of chattering at the tolerance level.
    pub stiff_cap: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            max_steps: 2_000_000,
            stiff_cap: Some(2.0),
        }
    }
}

/// One accepted step with endpoint values and slopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub t0: f64,
    pub y0: f64,
    pub f0: f64,
    pub t1: f64,
    pub y1: f64,
    pub f1: f64,
}

impl Step {
    /// Cubic Hermite interpolant at `t` in `[t0, t1]`.
    pub fn interpolate(&self, t: f64) -> f64 {
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * self.y0
            + (s3 - 2.0 * s2 + s) * h * self.f0
            + (-2.0 * s3 + 3.0 * s2) * self.y1
            + (s3 - s2) * h * self.f1
    }

    /// Time at which the interpolant crosses `level`, if it is bracketed by the step.
    pub fn crossing(&self, level: f64) -> Option<f64> {
        let a = self.y0 - level;
        let b = self.y1 - level;
        if a == 0.0 {
            return Some(self.t0);
        }
        if a.signum() == b.signum() && b != 0.0 {
            return None;
        }
        let tol = 1e-15 * self.t1.abs().max(1.0);
        brent_root(|t| self.interpolate(t) - level, self.t0, self.t1, tol, 200).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Halt,
}

/// Why an integration ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeEnd {
    pub t: f64,
    pub y: f64,
    pub halted: bool,
    pub steps: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrate `y' = f(t, y)` from `t0` towards `t_end`, calling `on_step` after
/// every accepted step. Stops at `t_end`, on [`Control::Halt`], or with an
/// error once `max_steps` is exceeded or the step size collapses.
pub fn integrate<F, C>(
    f: F,
    t0: f64,
    y0: f64,
    t_end: f64,
    opts: OdeOptions,
    mut on_step: C,
) -> Result<OdeEnd>
where
    F: Fn(f64, f64) -> f64,
    C: FnMut(&Step) -> Control,
{
    if !(t_end > t0) {
        return Ok(OdeEnd {
            t: t0,
            y: y0,
            halted: false,
            steps: 0,
        });
    }
    let scale = |y: f64| opts.atol + opts.rtol * y.abs();
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, y);
    if !k1.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite slope {k1} at t = {t}"
        )));
    }
    let mut h = if k1 == 0.0 {
        1e-6 * (t_end - t0)
    } else {
        0.01 * scale(y) / k1.abs()
    };
    h = h.min(t_end - t0).max(1e-14 * (t_end - t0).max(1.0));
    let mut steps = 0;
    while t < t_end {
        if steps >= opts.max_steps {
            return Err(Error::Numerical(format!(
                "step limit {} reached at t = {t}",
                opts.max_steps
            )));
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        let k2 = f(t + C2 * h, y + h * A21 * k1);
        let k3 = f(t + C3 * h, y + h * (A31 * k1 + A32 * k2));
        let k4 = f(t + C4 * h, y + h * (A41 * k1 + A42 * k2 + A43 * k3));
        let k5 = f(
            t + C5 * h,
            y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4),
        );
        let k6 = f(
            t + h,
            y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5),
        );
        let y1 = y + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6);
        let k7 = f(t + h, y1);
        let err = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7);
        let ratio = if y1.is_finite() && k7.is_finite() {
            err.abs() / scale(y.abs().max(y1.abs()))
        } else {
            f64::INFINITY
        };
        if ratio <= 1.0 {
            let t1 = if last { t_end } else { t + h };
            let step = Step {
                t0: t,
                y0: y,
                f0: k1,
                t1,
                y1,
                f1: k7,
            };
            steps += 1;
            t = t1;
            y = y1;
            k1 = k7;
            if on_step(&step) == Control::Halt {
                return Ok(OdeEnd {
                    t,
                    y,
                    halted: true,
                    steps,
                });
            }
            let grow = if ratio == 0.0 {
                5.0
            } else {
                (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= grow;
            if let Some(cap) = opts.stiff_cap {
                let d = 1e-7 * y.abs().max(1e-8);
                let jac = (f(t, y + d) - k1) / d;
                if jac < 0.0 && jac.is_finite() {
                    h = h.min(cap / -jac);
                }
            }
        } else {
            let shrink = if ratio.is_finite() {
                (0.9 * ratio.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.1
            };
            h *= shrink;
            if h < 1e-15 * t.abs().max(1e-300) {
                return Err(Error::Numerical(format!("step size underflow at t = {t}")));
            }
        }
    }
    Ok(OdeEnd {
        t,
        y,
        halted: false,
        steps,
    })
}
