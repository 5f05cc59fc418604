//! `clip_path,label` manifests, one per dataset split.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::taxonomy::{DatasetDescriptor, Taxonomy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    /// Relative to the dataset root.
    pub clip_path: PathBuf,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub dataset_id: String,
    pub split: String,
    pub root: PathBuf,
    pub rows: Vec<ManifestRow>,
}

fn manifest_err(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::Manifest(format!("{}: {e}", path.display()))
}

impl DatasetManifest {
    pub fn read(path: &Path, dataset_id: &str, split: &str, root: &Path) -> Result<Self, EvalError> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| manifest_err(path, e))?;
        let headers = reader.headers().map_err(|e| manifest_err(path, e))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["clip_path", "label"] {
            return Err(manifest_err(path, "header must be `clip_path,label`"));
        }
        let rows = reader
            .deserialize()
            .collect::<Result<Vec<ManifestRow>, _>>()
            .map_err(|e| manifest_err(path, e))?;
        Ok(Self {
            dataset_id: dataset_id.into(),
            split: split.into(),
            root: root.to_path_buf(),
            rows,
        })
    }

    /// The manifest a taxonomy entry points at, under dataset root `root`.
    pub fn for_dataset(descriptor: &DatasetDescriptor, root: &Path) -> Result<Self, EvalError> {
        Self::read(
            &root.join(&descriptor.manifest_path),
            &descriptor.dataset_id,
            &descriptor.split,
            root,
        )
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(["clip_path", "label"]).expect("in-memory csv");
        for r in &self.rows {
            w.serialize(r).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 manifest")
    }

    pub fn write(&self, path: &Path) -> Result<(), EvalError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| EvalError::io(parent, e))?;
        }
        std::fs::write(path, self.to_csv_string()).map_err(|e| EvalError::io(path, e))
    }

    /// Labels known, paths unique, at least one row.
    pub fn validate(&self, labels: &[String]) -> Result<(), EvalError> {
        if self.rows.is_empty() {
            return Err(EvalError::Manifest(format!("{}: manifest has no rows", self.dataset_id)));
        }
        let known: HashSet<&str> = labels.iter().map(String::as_str).collect();
        let mut seen = HashSet::new();
        for (i, r) in self.rows.iter().enumerate() {
            if !known.contains(r.label.as_str()) {
                return Err(EvalError::Manifest(format!(
                    "{} row {}: label `{}` is not in the dataset's label registry",
                    self.dataset_id,
                    i + 2,
                    r.label
                )));
            }
            if !seen.insert(&r.clip_path) {
                return Err(EvalError::Manifest(format!(
                    "{} row {}: duplicate clip path {}",
                    self.dataset_id,
                    i + 2,
                    r.clip_path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn clip_paths(&self) -> Vec<PathBuf> {
        self.rows.iter().map(|r| self.root.join(&r.clip_path)).collect()
    }

    /// Fails with the first few missing clips, if any.
    pub fn check_files(&self) -> Result<(), EvalError> {
        let missing: Vec<PathBuf> = self.clip_paths().into_iter().filter(|p| !p.is_file()).collect();
        if missing.is_empty() {
            return Ok(());
        }
        let shown: Vec<String> = missing.iter().take(3).map(|p| p.display().to_string()).collect();
        Err(EvalError::Manifest(format!(
            "{}: {} clip(s) missing, e.g. {}",
            self.dataset_id,
            missing.len(),
            shown.join(", ")
        )))
    }
}

/// A dataset ready for evaluation: taxonomy entry, label texts, manifest.
#[derive(Debug, Clone)]
pub struct EvalDataset {
    pub descriptor: DatasetDescriptor,
    /// `(label_id, display text)` in the stable label order.
    pub labels: Vec<(String, String)>,
    pub manifest: DatasetManifest,
}

impl EvalDataset {
    pub fn load(taxonomy: &Taxonomy, dataset_id: &str, root: &Path) -> Result<Self, EvalError> {
        let descriptor = taxonomy.dataset(dataset_id)?.clone();
        let labels = taxonomy.labeled_texts(dataset_id)?;
        let manifest = DatasetManifest::for_dataset(&descriptor, root)?;
        Ok(Self {
            descriptor,
            labels,
            manifest,
        })
    }

    pub fn label_texts(&self) -> Vec<String> {
        self.labels.iter().map(|(_, t)| t.clone()).collect()
    }
}
