//! Output directory owned by one evaluation process.
//!
//! Layout: `manifest.csv`, `config.json`, `predictions_run<N>.csv`,
//! `report.json` (plus whatever else the caller writes).

use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{EvalError, EvaluationOutput};

const LOCK: &str = ".lock";

#[derive(Debug)]
pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    /// Creates `path` if needed and takes its lock file.
    pub fn create(path: &Path) -> Result<Self, EvalError> {
        std::fs::create_dir_all(path).map_err(|e| EvalError::io(path, e))?;
        let lock = path.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(_) => {
                let _ = std::fs::write(&lock, std::process::id().to_string());
                Ok(Self { path: path.to_path_buf() })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(EvalError::Locked(path.to_path_buf())),
            Err(e) => Err(EvalError::io(&lock, e)),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf, EvalError> {
        let p = self.path.join(name);
        std::fs::write(&p, text).map_err(|e| EvalError::io(&p, e))?;
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, EvalError> {
        let mut s = serde_json::to_string_pretty(value).expect("serializable value");
        s.push('\n');
        self.write_text(name, &s)
    }

    /// Manifest copy, per-run predictions and the report.
    pub fn write_evaluation(&self, manifest_csv: &str, out: &EvaluationOutput) -> Result<(), EvalError> {
        self.write_text("manifest.csv", manifest_csv)?;
        for run in &out.runs {
            self.write_text(&format!("predictions_run{}.csv", run.run + 1), &run.to_csv_string())?;
        }
        self.write_json("report.json", &out.report)?;
        Ok(())
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(self.path.join(LOCK));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_owner_at_a_time() {
        let dir = tempfile::tempdir().unwrap();
        let run = dir.path().join("run");
        let a = RunDir::create(&run).unwrap();
        assert_eq!(RunDir::create(&run).unwrap_err().kind(), "RunDirLocked");
        a.write_json("x.json", &serde_json::json!({"a": 1})).unwrap();
        drop(a);
        assert!(!run.join(LOCK).exists());
        let _b = RunDir::create(&run).unwrap();
        assert_eq!(std::fs::read_to_string(run.join("x.json")).unwrap(), "{\n  \"a\": 1\n}\n");
    }
}
