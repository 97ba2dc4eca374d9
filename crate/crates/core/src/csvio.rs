//! CSV output with a leading provenance comment line.
//!
//! Every file starts with `# run_id=<id> config_hash=<hash>`, then a header
//! row. Floats use the shortest representation that round-trips, so equal
//! values always produce equal bytes.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// First 16 hex digits of the SHA-256 of `data`.
pub fn content_hash(data: &[u8]) -> String {
    let d = Sha256::digest(data);
    d[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvMeta {
    pub run_id: String,
    pub config_hash: String,
}

impl CsvMeta {
    pub fn new(run_id: impl Into<String>, config_hash: impl Into<String>) -> Self {
        Self {
            run_id: run_id.into(),
            config_hash: config_hash.into(),
        }
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Render a table to bytes.
pub fn render(meta: &CsvMeta, header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut buf = format!(
        "# run_id={} config_hash={}\n",
        meta.run_id, meta.config_hash
    )
    .into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for r in rows {
            if r.len() != header.len() {
                return Err(Error::Shape(format!(
                    "row of {} fields under a {}-column header",
                    r.len(),
                    header.len()
                )));
            }
            w.write_record(r)?;
        }
        w.flush()?;
    }
    Ok(buf)
}

pub fn write_table(
    path: &Path,
    meta: &CsvMeta,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let bytes = render(meta, header, rows)?;
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}
