//! Run directories and their `run.json` records.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::ValueEnum;
use serde::Serialize;

use super::{Failure, OutArgs};
use crate::csvio::{content_hash, CsvMeta};
use crate::error::Result;

/// Behaviour when a run directory already exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Collision {
    /// Append `-2`, `-3`, ... to the directory name.
    Suffix,
    /// Refuse to run.
    Error,
    /// Delete the existing directory first.
    Overwrite,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    /// Hash of the config snapshot and the code version; identical configs
    /// get identical ids.
    pub run_id: String,
    pub command: String,
    pub config_hash: String,
    pub config: String,
    /// Paths relative to the run directory.
    pub outputs: Vec<String>,
    pub seconds: f64,
    pub status: String,
    /// Command-specific results, e.g. the escape step of a training run.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, String>,
}

pub fn run_id(snapshot: &str) -> String {
    content_hash(format!("{snapshot}\nqlab {}", env!("CARGO_PKG_VERSION")).as_bytes())
}

pub struct RunDir {
    path: PathBuf,
    meta: CsvMeta,
    record: RunRecord,
    start: Instant,
}

impl RunDir {
    /// Allocate `<parent>/<command>-<run id>` per the collision policy.
    pub fn create(
        command: &str,
        snapshot: &str,
        out: &OutArgs,
    ) -> std::result::Result<Self, Failure> {
        let id = run_id(snapshot);
        let parent = out.parent();
        let base = parent.join(format!("{command}-{id}"));
        let path = match out.on_collision {
            _ if !base.exists() => base,
            Collision::Error => {
                return Err(Failure::Usage(format!(
                    "{} already exists; pass --on-collision suffix or overwrite",
                    base.display()
                )))
            }
            Collision::Overwrite => {
                fs::remove_dir_all(&base).map_err(crate::Error::from)?;
                base
            }
            Collision::Suffix => (2..)
                .map(|i| parent.join(format!("{command}-{id}-{i}")))
                .find(|p| !p.exists())
                .expect("unbounded suffix search"),
        };
        fs::create_dir_all(&path).map_err(crate::Error::from)?;
        let config_hash = content_hash(snapshot.as_bytes());
        Ok(Self {
            meta: CsvMeta::new(id.clone(), config_hash.clone()),
            record: RunRecord {
                run_id: id,
                command: command.into(),
                config_hash,
                config: snapshot.into(),
                outputs: Vec::new(),
                seconds: 0.0,
                status: "running".into(),
                notes: BTreeMap::new(),
            },
            path,
            start: Instant::now(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn meta(&self) -> &CsvMeta {
        &self.meta
    }

    pub fn record(&self) -> &RunRecord {
        &self.record
    }

    /// Register an output file and return its full path; parents are created.
    pub fn file(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.path.join(rel);
        if let Some(d) = p.parent() {
            fs::create_dir_all(d)?;
        }
        if !self.record.outputs.iter().any(|o| o == rel) {
            self.record.outputs.push(rel.into());
        }
        Ok(p)
    }

    /// Register every CSV directly under the run directory.
    pub fn add_all_csv(&mut self) -> Result<()> {
        let mut names: Vec<String> = fs::read_dir(&self.path)?
            .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
            .filter(|n| n.ends_with(".csv"))
            .collect();
        names.sort();
        for n in names {
            self.file(&n)?;
        }
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.record.notes.insert(key.into(), value.to_string());
    }

    /// Write `run.json` and print the run directory.
    pub fn finish(&mut self, status: &str) -> Result<()> {
        self.record.status = status.into();
        self.record.seconds = self.start.elapsed().as_secs_f64();
        let json = crate::lab::summary_json(&self.record)?;
        fs::write(self.path.join("run.json"), json)?;
        println!("run {} -> {}", self.record.run_id, self.path.display());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn out(dir: &Path, c: Collision) -> OutArgs {
        OutArgs {
            out: Some(dir.to_path_buf()),
            on_collision: c,
        }
    }

    #[test]
    fn collisions_follow_policy() {
        let tmp = tempfile::tempdir().unwrap();
        let a = RunDir::create("x", "cfg", &out(tmp.path(), Collision::Suffix)).unwrap();
        let b = RunDir::create("x", "cfg", &out(tmp.path(), Collision::Suffix)).unwrap();
        assert_eq!(a.record().run_id, b.record().run_id);
        assert_ne!(a.path(), b.path());
        assert!(b.path().to_string_lossy().ends_with("-2"));
        assert!(matches!(
            RunDir::create("x", "cfg", &out(tmp.path(), Collision::Error)),
            Err(Failure::Usage(_))
        ));
        fs::write(a.path().join("stale"), "x").unwrap();
        let c = RunDir::create("x", "cfg", &out(tmp.path(), Collision::Overwrite)).unwrap();
        assert_eq!(c.path(), a.path());
        assert!(!c.path().join("stale").exists());
    }

    #[test]
    fn run_id_depends_on_config() {
        assert_eq!(run_id("a"), run_id("a"));
        assert_ne!(run_id("a"), run_id("b"));
    }
}
