//! Run configuration file (TOML) and the error type the commands return.
//!
//! ```toml
//! seed = 0
//! cache_dir = "cache"
//! output_dir = "runs"
//! backend_id = "msclap2023"
//! condition = "tspe"
//!
//! [dataset_roots]
//! ESC50 = "/data/ESC-50-master"
//!
//! [backend]
//! mock_dimension = 64
//! checkpoints = { msclap2023 = "/models/CLAP_weights_2023.pth" }
//! ```
//!
//! Relative paths are taken relative to the config file's directory.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tspe_core::curation::CurationError;
use tspe_core::encoder::{BackendConfig, EncoderError};
use tspe_core::ensemble::EnsembleError;
use tspe_core::eval::EvalError;
use tspe_core::promptgen::{PromptGenError, RemoteConfig};
use tspe_core::taxonomy::TaxonomyError;

/// A failed command: usage problems exit 2, module errors exit 1.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Module { kind: &'static str, message: String },
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Module { .. } => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "UsageError: {m}"),
            Self::Module { kind, message } if message.starts_with(kind) => f.write_str(message),
            Self::Module { kind, message } => write!(f, "{kind}: {message}"),
        }
    }
}

macro_rules! module_error {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::Module { kind: e.kind(), message: e.to_string() }
            }
        }
    )*};
}

module_error!(TaxonomyError, PromptGenError, CurationError, EncoderError, EnsembleError, EvalError);

pub fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Module {
        kind: "IoError",
        message: format!("{}: {e}", path.display()),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// TOML integers stop at 2^63 - 1; larger seeds are written as strings.
    #[serde(default, deserialize_with = "seed_from_toml")]
    pub seed: Option<u64>,
    pub cache_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub backend_id: Option<String>,
    pub condition: Option<String>,
    /// Replacement for the shipped taxonomy.
    pub taxonomy: Option<PathBuf>,
    /// Replacement for the shipped pool file.
    pub pools: Option<PathBuf>,
    /// Replacement for the shipped compatibility rules.
    pub rules: Option<PathBuf>,
    #[serde(default)]
    pub dataset_roots: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub backend: BackendConfig,
    pub remote: Option<RemoteConfig>,
}

fn seed_from_toml<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<u64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Seed {
        Int(i64),
        Text(String),
    }
    match Seed::deserialize(d)? {
        Seed::Int(i) => u64::try_from(i).map(Some).map_err(|_| serde::de::Error::custom("seed must not be negative")),
        Seed::Text(t) => t.trim().parse().map(Some).map_err(serde::de::Error::custom),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.cache_dir, &mut self.output_dir, &mut self.taxonomy, &mut self.pools, &mut self.rules]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        self.dataset_roots.values_mut().for_each(fix);
        self.backend.checkpoints.values_mut().for_each(fix);
    }

    /// Every input path the config names must exist.
    pub fn validate(&self) -> Result<(), Failure> {
        let inputs = [&self.taxonomy, &self.pools, &self.rules]
            .into_iter()
            .flatten()
            .chain(self.dataset_roots.values())
            .chain(self.backend.checkpoints.values());
        for p in inputs {
            if !p.exists() {
                return Err(Failure::Usage(format!("config refers to missing path {}", p.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_and_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("esc")).unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "seed = \"18446744073709551615\"\ncache_dir = \"cache\"\n[dataset_roots]\nESC50 = \"esc\"\n[backend]\nmock_dimension = 8\n",
        )
        .unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.seed, Some(u64::MAX));
        assert_eq!(cfg.cache_dir, Some(dir.path().join("cache")));
        assert_eq!(cfg.dataset_roots["ESC50"], dir.path().join("esc"));
        assert_eq!(cfg.backend.mock_dimension, Some(8));
    }

    #[test]
    fn missing_paths_and_unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[dataset_roots]\nESC50 = \"nowhere\"\n").unwrap();
        assert_eq!(RunConfig::load(&path).unwrap_err().exit_code(), 2);
        std::fs::write(&path, "colour = \"blue\"\n").unwrap();
        assert!(RunConfig::load(&path).is_err());
        std::fs::write(&path, "seed = -1\n").unwrap();
        assert!(RunConfig::load(&path).is_err());
        std::fs::write(&path, "seed = 42\n").unwrap();
        assert_eq!(RunConfig::load(&path).unwrap().seed, Some(42));
    }

    #[test]
    fn failure_messages_name_the_error() {
        let f: Failure = EvalError::Manifest("x".into()).into();
        assert_eq!(f.to_string(), "ManifestError: x");
        assert_eq!(f.exit_code(), 1);
        let io = io_failure(Path::new("/a"), std::io::Error::other("boom"));
        assert_eq!(io.to_string(), "IoError: /a: boom");
    }
}
