use std::path::Path;

use super::{DynamicsTrace, EscapeFit, NoiseTrace};
use crate::csvio::{fmt_f64, fmt_opt, write_table, CsvMeta};
use crate::error::Result;

/// Columns `t, p, pdot_predicted, pdot_measured`.
pub fn write_trace(path: &Path, meta: &CsvMeta, trace: &DynamicsTrace) -> Result<()> {
    let measured = trace.pdot_measured();
    let rows: Vec<Vec<String>> = (0..trace.t.len())
        .map(|i| {
            vec![
                fmt_f64(trace.t[i]),
                fmt_f64(trace.p[i]),
                fmt_f64(trace.pdot_predicted[i]),
                fmt_f64(measured[i]),
            ]
        })
        .collect();
    write_table(
        path,
        meta,
        &["t", "p", "pdot_predicted", "pdot_measured"],
        &rows,
    )
}

/// Columns `t, ptilde`.
pub fn write_noise_trace(path: &Path, meta: &CsvMeta, trace: &NoiseTrace) -> Result<()> {
    let rows: Vec<Vec<String>> = trace
        .t
        .iter()
        .zip(&trace.ptilde)
        .map(|(t, p)| vec![fmt_f64(*t), fmt_f64(*p)])
        .collect();
    write_table(path, meta, &["t", "ptilde"], &rows)
}

/// One sweep measurement. `status` is a trace status or `no-crossing`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub q: f64,
    pub p0: f64,
    pub eps: Option<f64>,
    pub t: Option<f64>,
    pub status: String,
}

/// Columns `q, p0, eps, T, status`. Each fit is appended as two rows per q
/// with status `fit-slope` and `fit-r2`, the value in the `T` column.
pub fn write_sweep(
    path: &Path,
    meta: &CsvMeta,
    rows: &[SweepRow],
    fits: &[(f64, EscapeFit)],
) -> Result<()> {
    let mut out: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.q),
                fmt_f64(r.p0),
                fmt_opt(r.eps),
                fmt_opt(r.t),
                r.status.clone(),
            ]
        })
        .collect();
    for (q, f) in fits {
        out.push(vec![
            fmt_f64(*q),
            String::new(),
            String::new(),
            fmt_f64(f.slope),
            "fit-slope".into(),
        ]);
        out.push(vec![
            fmt_f64(*q),
            String::new(),
            String::new(),
            fmt_f64(f.r2),
            "fit-r2".into(),
        ]);
    }
    write_table(path, meta, &["q", "p0", "eps", "T", "status"], &out)
}
