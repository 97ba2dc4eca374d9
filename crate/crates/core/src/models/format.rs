//! Plain-text model format.
//!
//! ```text
//! qlab-model v1
//! kind latent
//! n_inputs 2
//! latent_vocab 3
//! latent_len 2
//! output_vocab 4
//! output_len 2
//! params 384
//! 1.2345678901234567e-1
//! ...
//! ```
//!
//! `kind sigmoid` has no dimension lines; `kind categorical` has a single
//! `alpha a_1 .. a_K` line. Parameters follow in flattened order, one per
//! line with 17 significant digits, so a write/read round trip is exact.

use std::fmt::Write as _;
use std::path::Path;

use super::{CategoricalModel, SigmoidModel};
use super::{Example, LatentDims, LatentSeqModel, Model};
use crate::error::{Error, Result};
use crate::qcore::SimplexPoint;

const MAGIC: &str = "qlab-model v1";

/// Any of the supported model classes.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Sigmoid(SigmoidModel),
    Categorical(CategoricalModel),
    Latent(LatentSeqModel),
}

impl AnyModel {
    pub fn kind(&self) -> &'static str {
        match self {
            AnyModel::Sigmoid(_) => "sigmoid",
            AnyModel::Categorical(_) => "categorical",
            AnyModel::Latent(_) => "latent",
        }
    }

    fn inner(&self) -> &dyn Model {
        match self {
            AnyModel::Sigmoid(m) => m,
            AnyModel::Categorical(m) => m,
            AnyModel::Latent(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Model {
        match self {
            AnyModel::Sigmoid(m) => m,
            AnyModel::Categorical(m) => m,
            AnyModel::Latent(m) => m,
        }
    }
}

impl Model for AnyModel {
    fn num_params(&self) -> usize {
        self.inner().num_params()
    }

    fn params(&self) -> &[f64] {
        self.inner().params()
    }

    fn params_mut(&mut self) -> &mut [f64] {
        self.inner_mut().params_mut()
    }

    fn log_marginal_score(&self, ex: &Example) -> Result<(f64, Vec<f64>)> {
        self.inner().log_marginal_score(ex)
    }

    fn log_marginal(&self, ex: &Example) -> Result<f64> {
        self.inner().log_marginal(ex)
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serialize a model to the text format.
pub fn write_model(model: &AnyModel) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "kind {}", model.kind());
    match model {
        AnyModel::Sigmoid(_) => {}
        AnyModel::Categorical(m) => {
            let a: Vec<String> = m.alpha().weights().iter().map(|&v| fmt_f64(v)).collect();
            let _ = writeln!(s, "alpha {}", a.join(" "));
        }
        AnyModel::Latent(m) => {
            let d = m.dims();
            let _ = writeln!(s, "n_inputs {}", d.n_inputs);
            let _ = writeln!(s, "latent_vocab {}", d.latent_vocab);
            let _ = writeln!(s, "latent_len {}", d.latent_len);
            let _ = writeln!(s, "output_vocab {}", d.output_vocab);
            let _ = writeln!(s, "output_len {}", d.output_len);
        }
    }
    let _ = writeln!(s, "params {}", model.num_params());
    for &v in model.params() {
        let _ = writeln!(s, "{}", fmt_f64(v));
    }
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        for (i, line) in self.inner.by_ref() {
            let t = line.trim();
            if !t.is_empty() {
                return Ok((i + 1, t));
            }
        }
        Err(Error::Parse("unexpected end of model file".into()))
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let (n, line) = self.next()?;
        match line.split_once(char::is_whitespace) {
            Some((k, v)) if k == key => Ok(v.trim()),
            _ => Err(Error::Parse(format!(
                "line {n}: expected `{key} <value>`, got `{line}`"
            ))),
        }
    }

    fn keyed_usize(&mut self, key: &str) -> Result<usize> {
        let v = self.keyed(key)?;
        v.parse()
            .map_err(|_| Error::Parse(format!("`{key}` value `{v}` is not a count")))
    }
}

fn parse_f64(n: usize, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {n}: `{s}` is not a number")))
}

/// Parse the text format.
pub fn read_model(text: &str) -> Result<AnyModel> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (n, magic) = lines.next()?;
    if magic != MAGIC {
        return Err(Error::Parse(format!("line {n}: expected `{MAGIC}`")));
    }
    let kind = lines.keyed("kind")?.to_string();
    let alpha = if kind == "categorical" {
        let raw = lines.keyed("alpha")?;
        let vals = raw
            .split_whitespace()
            .map(|t| parse_f64(0, t))
            .collect::<Result<Vec<_>>>()?;
        Some(SimplexPoint::new(vals)?)
    } else {
        None
    };
    let dims = if kind == "latent" {
        Some(LatentDims {
            n_inputs: lines.keyed_usize("n_inputs")?,
            latent_vocab: lines.keyed_usize("latent_vocab")?,
            latent_len: lines.keyed_usize("latent_len")?,
            output_vocab: lines.keyed_usize("output_vocab")?,
            output_len: lines.keyed_usize("output_len")?,
        })
    } else {
        None
    };
    let count = lines.keyed_usize("params")?;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, line) = lines.next()?;
        params.push(parse_f64(n, line)?);
    }
    if let Ok((n, extra)) = lines.next() {
        return Err(Error::Parse(format!(
            "line {n}: trailing content `{extra}`"
        )));
    }
    match kind.as_str() {
        "sigmoid" => match params.as_slice() {
            [t] => Ok(AnyModel::Sigmoid(SigmoidModel::new(*t))),
            _ => Err(Error::Parse(
                "sigmoid model needs exactly one parameter".into(),
            )),
        },
        "categorical" => Ok(AnyModel::Categorical(CategoricalModel::new(
            params,
            alpha.expect("parsed above"),
        )?)),
        "latent" => Ok(AnyModel::Latent(LatentSeqModel::new(
            dims.expect("parsed above"),
            params,
        )?)),
        other => Err(Error::Parse(format!("unknown model kind `{other}`"))),
    }
}

pub fn load_model(path: &Path) -> Result<AnyModel> {
    read_model(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    #[test]
    fn latent_round_trip_is_exact() {
        let d = LatentDims {
            n_inputs: 2,
            latent_vocab: 3,
            latent_len: 2,
            output_vocab: 2,
            output_len: 2,
        };
        let m = AnyModel::Latent(LatentSeqModel::random(d, 3.0, &mut Stream::new(1)).unwrap());
        let text = write_model(&m);
        let back = read_model(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(write_model(&back), text);
    }

    #[test]
    fn small_models_round_trip() {
        let s = AnyModel::Sigmoid(SigmoidModel::new(-0.1));
        assert_eq!(read_model(&write_model(&s)).unwrap(), s);
        let alpha = SimplexPoint::new(vec![0.7, 0.2, 0.1]).unwrap();
        let c = AnyModel::Categorical(
            CategoricalModel::new(vec![0.1, 1.0 / 3.0, -2.0], alpha).unwrap(),
        );
        assert_eq!(read_model(&write_model(&c)).unwrap(), c);
    }

    #[test]
    fn rejects_malformed_text() {
        assert!(read_model("").is_err());
        assert!(read_model("qlab-model v2\nkind sigmoid\nparams 1\n0\n").is_err());
        assert!(read_model("qlab-model v1\nkind sigmoid\nparams 2\n0\n1\n").is_err());
        assert!(read_model("qlab-model v1\nkind sigmoid\nparams 1\n0\n1\n").is_err());
        assert!(read_model("qlab-model v1\nkind tree\nparams 0\n").is_err());
        assert!(read_model("qlab-model v1\nkind sigmoid\nparams 1\nabc\n").is_err());
    }
}
