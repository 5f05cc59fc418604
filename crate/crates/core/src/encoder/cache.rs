//! Content-addressed embedding store.
//!
//! On disk there is one file per (backend fingerprint, modality):
//!
//! ```text
//! tspe-embedding-cache v1<TAB>backend=mock<TAB>fingerprint=...<TAB>modality=text<TAB>dimension=64
//! <content hash><TAB><hex of the f64 little-endian components>
//! ...
//! ```
//!
//! Vectors are stored as raw bytes, so a hit is bit-identical to the original
//! computation. A header that disagrees with the backend is a hard error.

use std::collections::HashMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::EncoderError;

const MAGIC: &str = "tspe-embedding-cache v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Audio,
}

impl Modality {
    pub const ALL: [Modality; 2] = [Modality::Text, Modality::Audio];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Text => "text",
            Self::Audio => "audio",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub struct EmbeddingCache {
    dir: Option<PathBuf>,
    backend_id: String,
    fingerprint: String,
    dimension: usize,
    entries: RwLock<HashMap<Modality, HashMap<String, Vec<f64>>>>,
    writer: Mutex<()>,
}

impl fmt::Debug for EmbeddingCache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EmbeddingCache")
            .field("dir", &self.dir)
            .field("fingerprint", &self.fingerprint)
            .field("dimension", &self.dimension)
            .finish()
    }
}

fn safe_name(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

impl EmbeddingCache {
    pub fn in_memory(backend_id: &str, fingerprint: &str, dimension: usize) -> Self {
        Self {
            dir: None,
            backend_id: backend_id.into(),
            fingerprint: fingerprint.into(),
            dimension,
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(()),
        }
    }

    /// Opens (creating if needed) the cache files for one backend under `dir`.
    pub fn open(dir: &Path, backend_id: &str, fingerprint: &str, dimension: usize) -> Result<Self, EncoderError> {
        std::fs::create_dir_all(dir).map_err(|e| EncoderError::Cache {
            path: dir.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut cache = Self::in_memory(backend_id, fingerprint, dimension);
        cache.dir = Some(dir.to_path_buf());
        let mut all = HashMap::new();
        for m in Modality::ALL {
            let path = cache.file_for(m).expect("dir is set");
            if path.exists() {
                all.insert(m, cache.read_file(&path, m)?);
            }
        }
        cache.entries = RwLock::new(all);
        Ok(cache)
    }

    pub fn file_for(&self, modality: Modality) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(format!("{}.{modality}.tsv", safe_name(&self.fingerprint))))
    }

    fn header(&self, modality: Modality) -> String {
        format!(
            "{MAGIC}\tbackend={}\tfingerprint={}\tmodality={modality}\tdimension={}",
            self.backend_id, self.fingerprint, self.dimension
        )
    }

    fn read_file(&self, path: &Path, modality: Modality) -> Result<HashMap<String, Vec<f64>>, EncoderError> {
        let err = |message: String| EncoderError::Cache {
            path: path.to_path_buf(),
            message,
        };
        let file = File::open(path).map_err(|e| err(e.to_string()))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| err(e.to_string()))?
            .unwrap_or_default();
        let expected = self.header(modality);
        if header != expected {
            return Err(err(format!("header mismatch: found `{header}`, expected `{expected}`")));
        }
        let mut map = HashMap::new();
        for (n, line) in lines.enumerate() {
            let line = line.map_err(|e| err(e.to_string()))?;
            let bad = || err(format!("line {}: malformed record", n + 2));
            let (key, hexed) = line.split_once('\t').ok_or_else(bad)?;
            let bytes = hex::decode(hexed).map_err(|_| bad())?;
            if bytes.len() != 8 * self.dimension {
                return Err(bad());
            }
            let v = bytes
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            map.insert(key.to_string(), v);
        }
        Ok(map)
    }

    pub fn get(&self, modality: Modality, key: &str) -> Option<Vec<f64>> {
        let entries = self.entries.read().expect("cache lock");
        entries.get(&modality)?.get(key).cloned()
    }

    pub fn len(&self, modality: Modality) -> usize {
        let entries = self.entries.read().expect("cache lock");
        entries.get(&modality).map_or(0, HashMap::len)
    }

    pub fn is_empty(&self) -> bool {
        Modality::ALL.iter().all(|&m| self.len(m) == 0)
    }

    /// Stores new entries; keys already present are left untouched.
    pub fn insert_many(&self, modality: Modality, items: &[(String, Vec<f64>)]) -> Result<(), EncoderError> {
        let _guard = self.writer.lock().expect("cache writer lock");
        let fresh: Vec<&(String, Vec<f64>)> = {
            let entries = self.entries.read().expect("cache lock");
            let existing = entries.get(&modality);
            let mut seen = std::collections::HashSet::new();
            items
                .iter()
                .filter(|(k, _)| !existing.is_some_and(|m| m.contains_key(k)) && seen.insert(k))
                .collect()
        };
        if fresh.is_empty() {
            return Ok(());
        }
        if let Some(v) = fresh.iter().find(|(_, v)| v.len() != self.dimension) {
            return Err(EncoderError::DimensionMismatch {
                expected: self.dimension,
                found: v.1.len(),
            });
        }
        if let Some(path) = self.file_for(modality) {
            self.append(&path, modality, &fresh).map_err(|e| EncoderError::Cache {
                path: path.clone(),
                message: e.to_string(),
            })?;
        }
        let mut entries = self.entries.write().expect("cache lock");
        let map = entries.entry(modality).or_default();
        for (k, v) in fresh {
            map.insert(k.clone(), v.clone());
        }
        Ok(())
    }

    fn append(&self, path: &Path, modality: Modality, items: &[&(String, Vec<f64>)]) -> std::io::Result<()> {
        let new_file = !path.exists();
        let mut f = std::io::BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?);
        if new_file {
            writeln!(f, "{}", self.header(modality))?;
        }
        for (k, v) in items {
            let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
            writeln!(f, "{k}\t{}", hex::encode(bytes))?;
        }
        f.flush()
    }
}
