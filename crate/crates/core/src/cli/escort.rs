use clap::{ArgGroup, Args};

#[cfg(test)]
use super::parse_range;
use super::record::run_id;
use super::{CmdResult, Failure, Floats, Grid};
use crate::csvio::{content_hash, fmt_f64, render, CsvMeta};
use crate::oracle::{minimize_categorical, OracleOptions};
use crate::qcore::{escort_minimizer, QParam, SimplexPoint};

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("qs").required(true).args(["q", "q_grid"])))]
pub struct EscortArgs {
    /// Data distribution, comma-separated, summing to 1.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Floats,
    /// A single q in [0, 1].
    #[arg(long)]
    pub q: Option<f64>,
    /// Grid `start:end:step` of q values, end inclusive.
    #[arg(long)]
    pub q_grid: Option<Grid>,
}

/// One output row: q, escort weights, oracle gap, max/min ratio, whether the
/// ratio has not grown since the previous row, and a note.
pub fn table(alpha: &[f64], qs: &[f64]) -> Result<(Vec<String>, Vec<Vec<String>>), Failure> {
    let a = SimplexPoint::new(alpha.to_vec())?;
    let mut header: Vec<String> = vec!["q".into()];
    header.extend((1..=a.len()).map(|i| format!("theta_{i}")));
    header.extend(["oracle_gap", "sharpening", "monotone", "note"].map(String::from));
    let amax = a.weights().iter().copied().fold(f64::MIN, f64::max);
    let tied = a.weights().iter().filter(|&&v| v == amax).count() > 1;
    let mut rows = Vec::new();
    let mut prev = f64::INFINITY;
    for &q in qs {
        let qp = QParam::new(q)?;
        let theta = escort_minimizer(&a, qp)?;
        let w = theta.weights();
        // at q = 0 with tied maxima the minimizer is not unique
        let gap = if q == 0.0 && tied {
            String::new()
        } else {
            let o = minimize_categorical(&a, qp, OracleOptions::default())?;
            fmt_f64(
                w.iter()
                    .zip(&o)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max),
            )
        };
        let (hi, lo) = w
            .iter()
            .fold((f64::MIN, f64::MAX), |(h, l), &v| (h.max(v), l.min(v)));
        let ratio = hi / lo;
        let mut row = vec![fmt_f64(q)];
        row.extend(w.iter().map(|&v| fmt_f64(v)));
        row.push(gap);
        row.push(fmt_f64(ratio));
        // sharpening grows as q falls, so along increasing q it must not grow
        row.push(u8::from(ratio <= prev * (1.0 + 1e-12)).to_string());
        row.push(if q == 0.0 {
            "vertex; ties go to the lowest index".into()
        } else {
            String::new()
        });
        prev = ratio;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn run(a: &EscortArgs) -> CmdResult {
    let qs = match (&a.q, &a.q_grid) {
        (Some(q), _) => vec![*q],
        (None, Some(g)) => g.0.clone(),
        (None, None) => return Err(Failure::Usage("pass --q or --q-grid".into())),
    };
    let snapshot = format!("escort alpha={:?} q={qs:?}", a.alpha.0);
    let (header, rows) = table(&a.alpha.0, &qs)?;
    let meta = CsvMeta::new(run_id(&snapshot), content_hash(snapshot.as_bytes()));
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    let bytes = render(&meta, &h, &rows)?;
    print!("{}", String::from_utf8_lossy(&bytes));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_one_recovers_alpha() {
        let (_, rows) = table(&[0.8, 0.2], &[1.0]).unwrap();
        assert_eq!(rows[0][1].parse::<f64>().unwrap(), 0.8);
        assert_eq!(rows[0][2].parse::<f64>().unwrap(), 0.2);
    }

    #[test]
    fn q_zero_is_a_vertex_with_note() {
        let (_, rows) = table(&[0.4, 0.4, 0.2], &[0.0]).unwrap();
        assert_eq!(&rows[0][1..4], &["1", "0", "0"]);
        assert!(rows[0][7].contains("lowest index"));
    }

    #[test]
    fn grid_is_monotone() {
        let (_, rows) = table(&[0.5, 0.3, 0.2], &parse_range("0.1:1:0.1").unwrap()).unwrap();
        assert_eq!(rows.len(), 10);
        assert!(rows.iter().all(|r| r[6] == "1"));
    }

    #[test]
    fn malformed_simplex_is_usage() {
        assert!(matches!(table(&[0.5, 0.6], &[1.0]), Err(Failure::Usage(_))));
    }
}
