//! File-backed persistence. Layout under the data directory:
//!
//! ```text
//! plans/<id>.json
//! jobs/<id>.json
//! results/<job id>/{report.json, policy.ckpt, schedule.json, compare.json}
//! ```
//!
//! Every write goes to a temporary file first and is renamed into place,
//! so readers never observe a half-written record.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use uuid::Uuid;

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

pub const REPORT: &str = "report.json";
pub const CHECKPOINT: &str = "policy.ckpt";
pub const SCHEDULE: &str = "schedule.json";
pub const COMPARE: &str = "compare.json";

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        for dir in ["plans", "jobs", "results"] {
            fs::create_dir_all(root.join(dir))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn plan_path(&self, id: Uuid) -> PathBuf {
        self.root.join("plans").join(format!("{id}.json"))
    }

    fn job_path(&self, id: Uuid) -> PathBuf {
        self.root.join("jobs").join(format!("{id}.json"))
    }

    pub fn result_dir(&self, job: Uuid) -> PathBuf {
        self.root.join("results").join(job.to_string())
    }

    pub fn put_plan<T: Serialize>(&self, id: Uuid, plan: &T) -> io::Result<()> {
        write_json(&self.plan_path(id), plan)
    }

    pub fn put_job<T: Serialize>(&self, id: Uuid, job: &T) -> io::Result<()> {
        write_json(&self.job_path(id), job)
    }

    pub fn plans<T: DeserializeOwned>(&self) -> io::Result<Vec<(Uuid, T)>> {
        read_all(&self.root.join("plans"))
    }

    pub fn jobs<T: DeserializeOwned>(&self) -> io::Result<Vec<(Uuid, T)>> {
        read_all(&self.root.join("jobs"))
    }

    pub fn put_result(&self, job: Uuid, name: &str, bytes: &[u8]) -> io::Result<()> {
        let dir = self.result_dir(job);
        fs::create_dir_all(&dir)?;
        write_atomic(&dir.join(name), bytes)
    }

    pub fn result(&self, job: Uuid, name: &str) -> io::Result<Vec<u8>> {
        fs::read(self.result_dir(job).join(name))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let bytes = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
    write_atomic(path, &bytes)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension(format!("tmp-{}", Uuid::new_v4().simple()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn read_all<T: DeserializeOwned>(dir: &Path) -> io::Result<Vec<(Uuid, T)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let Some(id) = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| Uuid::parse_str(s).ok())
        else {
            continue;
        };
        let value = serde_json::from_slice(&fs::read(&path)?).map_err(io::Error::other)?;
        out.push((id, value));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_records_and_results() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let id = Uuid::new_v4();
        store.put_plan(id, &serde_json::json!({"a": 1})).unwrap();
        let plans: Vec<(Uuid, serde_json::Value)> = store.plans().unwrap();
        assert_eq!(plans, vec![(id, serde_json::json!({"a": 1}))]);
        store.put_result(id, SCHEDULE, b"{}").unwrap();
        assert_eq!(store.result(id, SCHEDULE).unwrap(), b"{}");
        assert!(store.result(id, COMPARE).is_err());
        // no temporary files are left behind
        let names: Vec<_> = fs::read_dir(dir.path().join("plans")).unwrap().collect();
        assert_eq!(names.len(), 1);
    }
}
