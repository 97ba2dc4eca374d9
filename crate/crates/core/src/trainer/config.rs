//! Training configuration: one flat TOML document with dotted keys.
//!
//! ```toml
//! method = "garl"        # grpo | garl | paft
//! q = 0.75
//! M = 8
//! K = 8                  # optional, PAFT only, defaults to M
//! lr = 40.0
//! steps = 2000
//! batch = 32
//! seed = 7
//! scenario = "cold"      # cold | warm
//! clip = 5.0             # optional global-norm clip, off when absent
//! eval.k = 16
//! eval.every = 10
//! eval.samples = 1       # optional, groups of k samples per example
//! task.p0 = 1e-3
//! task.examples = 32     # optional
//! sweep.q = [0.0, 0.5, 1.0]
//! sweep.seeds = [1, 2]
//! ```
//!
//! Unknown keys anywhere are errors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::QParam;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Group-relative baseline: the leave-one-out estimator pinned at `q = 0`.
    Grpo,
    /// Leave-one-out GARL at the configured `q`.
    Garl,
    Paft,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Grpo => "grpo",
            Method::Garl => "garl",
            Method::Paft => "paft",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Cold,
    Warm,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Cold => "cold",
            Scenario::Warm => "warm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub k: usize,
    pub every: usize,
    #[serde(default = "one")]
    pub samples: usize,
}

fn one() -> usize {
    1
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: 16,
            every: 10,
            samples: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub p0: f64,
    #[serde(default)]
    pub examples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub q: Vec<f64>,
    #[serde(default)]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    pub q: f64,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "K", default)]
    pub k: Option<usize>,
    pub lr: f64,
    pub steps: usize,
    pub batch: usize,
    pub seed: u64,
    pub scenario: Scenario,
    #[serde(default)]
    pub clip: Option<f64>,
    #[serde(default)]
    pub eval: EvalConfig,
    pub task: TaskConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

impl TrainConfig {
    /// Defaults used by the calibrated cold-start experiments.
    pub fn cold(q: f64, seed: u64) -> Self {
        Self {
            method: Method::Garl,
            q,
            m: 8,
            k: None,
            lr: 40.0,
            steps: 2000,
            batch: 32,
            seed,
            scenario: Scenario::Cold,
            clip: None,
            eval: EvalConfig {
                k: 16,
                every: 5,
                samples: 1,
            },
            task: TaskConfig {
                p0: 1e-3,
                examples: None,
            },
            sweep: SweepConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        QParam::new(self.q).map_err(|e| Error::Config(e.to_string()))?;
        if self.method == Method::Grpo && self.q != 0.0 {
            return bad(format!("method grpo fixes q = 0, got q = {}", self.q));
        }
        if self.m < 2 {
            return bad(format!(
                "M = {} but the leave-one-out baseline needs M >= 2",
                self.m
            ));
        }
        if self.k == Some(0) {
            return bad("K must be at least 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!(
                "learning rate {} must be finite and non-negative",
                self.lr
            ));
        }
        if self.batch == 0 {
            return bad("batch must be at least 1".into());
        }
        if let Some(c) = self.clip {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("clip {c} must be positive"));
            }
        }
        if self.eval.k == 0 || self.eval.every == 0 || self.eval.samples == 0 {
            return bad("eval.k, eval.every and eval.samples must be at least 1".into());
        }
        if !(self.task.p0 > 0.0 && self.task.p0 < 1.0) {
            return bad(format!("task.p0 = {} is outside (0, 1)", self.task.p0));
        }
        for &q in &self.sweep.q {
            QParam::new(q).map_err(|e| Error::Config(format!("sweep.q: {e}")))?;
        }
        Ok(())
    }

    pub fn qparam(&self) -> QParam {
        QParam::new(self.q).expect("validated")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }
}

impl FromStr for TrainConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
