//! Text/audio encoder backends, the embedding type, and the caching front end.
//!
//! Backends return raw vectors; [`Encoder`] validates them, caches the raw
//! values, and hands out L2-normalized [`Embedding`]s.

pub mod audio;
pub mod cache;
pub mod mock;
pub mod process;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use audio::{AudioClip, Preprocessing};
pub use cache::{EmbeddingCache, Modality};
pub use mock::{planted_frequency, MockBackend, MAX_PLANTED_CLASSES};
pub use process::{ProcessBackend, ProcessConfig};

/// Norm tolerance for a normalized embedding.
pub const NORM_TOLERANCE: f64 = 1e-6;

/// Norms below this are treated as zero and cannot be normalized.
pub const ZERO_NORM: f64 = 1e-12;

const DEFAULT_BATCH: usize = 64;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("BackendLoadError: {0}")]
    BackendLoad(String),
    #[error("EncodeError: {0}")]
    Encode(String),
    #[error("AudioDecodeError: {path}: {message}")]
    AudioDecode { path: PathBuf, message: String },
    #[error("DimensionMismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("CacheError: {path}: {message}")]
    Cache { path: PathBuf, message: String },
    #[error("UnsupportedCapability: backend `{backend}` cannot encode {modality}")]
    Capability { backend: String, modality: Modality },
}

impl EncoderError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::BackendLoad(_) => "BackendLoadError",
            Self::Encode(_) => "EncodeError",
            Self::AudioDecode { .. } => "AudioDecodeError",
            Self::DimensionMismatch { .. } => "DimensionMismatch",
            Self::Cache { .. } => "CacheError",
            Self::Capability { .. } => "UnsupportedCapability",
        }
    }
}

/// A real vector from a text or audio encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl Embedding {
    pub fn raw(values: Vec<f64>) -> Self {
        Self {
            values,
            normalized: false,
        }
    }

    /// Normalizes `values`, failing on a (near) zero vector.
    pub fn unit(values: Vec<f64>) -> Result<Self, EncoderError> {
        Self::raw(values).normalize()
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    pub fn normalize(self) -> Result<Self, EncoderError> {
        let n = self.norm();
        if n.is_nan() || n < ZERO_NORM {
            return Err(EncoderError::Encode(format!("cannot normalize a vector of norm {n:e}")));
        }
        Ok(Self {
            values: self.values.into_iter().map(|v| v / n).collect(),
            normalized: true,
        })
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        dot(&self.values, &other.values)
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= NORM_TOLERANCE
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub text: bool,
    pub audio: bool,
}

impl Capabilities {
    pub const BOTH: Capabilities = Capabilities { text: true, audio: true };
}

/// An audio-language encoder checkpoint (or a stand-in for one).
pub trait EncoderBackend: Send + Sync {
    fn backend_id(&self) -> &str;

    /// Identifies the exact model and settings; cache files are keyed on it.
    fn fingerprint(&self) -> String;

    fn dimension(&self) -> usize;

    fn capabilities(&self) -> Capabilities;

    fn preprocessing(&self) -> Preprocessing;

    /// Whether outputs depend on the run seed (nondeterministic kernels).
    fn seed_sensitive(&self) -> bool {
        false
    }

    fn encode_text(&self, texts: &[String], seed: u64) -> Result<Vec<Vec<f64>>, EncoderError>;

    fn encode_audio(&self, clips: &[AudioClip], seed: u64) -> Result<Vec<Vec<f64>>, EncoderError>;
}

/// Caching, validating front end over a backend.
pub struct Encoder {
    backend: Box<dyn EncoderBackend>,
    cache: Option<EmbeddingCache>,
    batch: usize,
}

impl Encoder {
    /// Backend with an in-memory cache.
    pub fn new(backend: Box<dyn EncoderBackend>) -> Self {
        let cache = EmbeddingCache::in_memory(backend.backend_id(), &backend.fingerprint(), backend.dimension());
        Self::with_cache(backend, cache)
    }

    pub fn with_cache(backend: Box<dyn EncoderBackend>, cache: EmbeddingCache) -> Self {
        Self {
            backend,
            cache: Some(cache),
            batch: DEFAULT_BATCH,
        }
    }

    /// Backend with a cache directory on disk.
    pub fn with_cache_dir(backend: Box<dyn EncoderBackend>, dir: &Path) -> Result<Self, EncoderError> {
        let cache = EmbeddingCache::open(dir, backend.backend_id(), &backend.fingerprint(), backend.dimension())?;
        Ok(Self::with_cache(backend, cache))
    }

    pub fn uncached(backend: Box<dyn EncoderBackend>) -> Self {
        Self {
            backend,
            cache: None,
            batch: DEFAULT_BATCH,
        }
    }

    pub fn batch_size(mut self, batch: usize) -> Self {
        self.batch = batch.max(1);
        self
    }

    pub fn backend(&self) -> &dyn EncoderBackend {
        self.backend.as_ref()
    }

    pub fn backend_id(&self) -> &str {
        self.backend.backend_id()
    }

    pub fn dimension(&self) -> usize {
        self.backend.dimension()
    }

    pub fn cache(&self) -> Option<&EmbeddingCache> {
        self.cache.as_ref()
    }

    fn require(&self, modality: Modality) -> Result<(), EncoderError> {
        let caps = self.backend.capabilities();
        let ok = match modality {
            Modality::Text => caps.text,
            Modality::Audio => caps.audio,
        };
        if ok {
            Ok(())
        } else {
            Err(EncoderError::Capability {
                backend: self.backend_id().to_string(),
                modality,
            })
        }
    }

    fn key(&self, content_hash: String, seed: u64) -> String {
        if self.backend.seed_sensitive() {
            format!("{content_hash}.{seed}")
        } else {
            content_hash
        }
    }

    fn check(&self, vectors: &[Vec<f64>], expected: usize) -> Result<(), EncoderError> {
        if vectors.len() != expected {
            return Err(EncoderError::Encode(format!(
                "backend returned {} embeddings for {expected} inputs",
                vectors.len()
            )));
        }
        let d = self.dimension();
        for v in vectors {
            if v.len() != d {
                return Err(EncoderError::DimensionMismatch {
                    expected: d,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(EncoderError::Encode("backend returned a non-finite component".into()));
            }
        }
        Ok(())
    }

    /// Looks up `keys` in the cache and computes the misses with `compute`,
    /// which receives the indices (into `keys`) of one batch of misses.
    fn resolve<F>(&self, modality: Modality, keys: &[String], compute: F) -> Result<Vec<Vec<f64>>, EncoderError>
    where
        F: Fn(&[usize]) -> Result<Vec<Vec<f64>>, EncoderError>,
    {
        let mut out: Vec<Option<Vec<f64>>> = vec![None; keys.len()];
        let mut first_of: HashMap<&str, usize> = HashMap::new();
        let mut misses = Vec::new();
        for (i, k) in keys.iter().enumerate() {
            if let Some(v) = self.cache.as_ref().and_then(|c| c.get(modality, k)) {
                out[i] = Some(v);
            } else if !first_of.contains_key(k.as_str()) {
                first_of.insert(k, i);
                misses.push(i);
            }
        }
        for chunk in misses.chunks(self.batch) {
            let vectors = compute(chunk)?;
            self.check(&vectors, chunk.len())?;
            if let Some(cache) = &self.cache {
                let entries: Vec<(String, Vec<f64>)> =
                    chunk.iter().zip(&vectors).map(|(&i, v)| (keys[i].clone(), v.clone())).collect();
                cache.insert_many(modality, &entries)?;
            }
            for (&i, v) in chunk.iter().zip(vectors) {
                out[i] = Some(v);
            }
        }
        Ok(keys
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let j = if out[i].is_some() { i } else { first_of[k.as_str()] };
                out[j].clone().expect("first occurrence resolved")
            })
            .collect())
    }

    /// Raw (unnormalized) text vectors in input order.
    pub fn embed_text_raw(&self, texts: &[String], seed: u64) -> Result<Vec<Vec<f64>>, EncoderError> {
        self.require(Modality::Text)?;
        if let Some(t) = texts.iter().find(|t| t.trim().is_empty()) {
            return Err(EncoderError::Encode(format!("empty text input `{t}`")));
        }
        let keys: Vec<String> = texts.iter().map(|t| self.key(text_hash(t), seed)).collect();
        self.resolve(Modality::Text, &keys, |idx| {
            let batch: Vec<String> = idx.iter().map(|&i| texts[i].clone()).collect();
            self.backend.encode_text(&batch, seed)
        })
    }

    pub fn embed_text(&self, texts: &[String], seed: u64) -> Result<Vec<Embedding>, EncoderError> {
        self.embed_text_raw(texts, seed)?.into_iter().map(Embedding::unit).collect()
    }

    /// Raw audio vectors in input order.
    pub fn embed_audio_raw(&self, paths: &[PathBuf], seed: u64) -> Result<Vec<Vec<f64>>, EncoderError> {
        self.require(Modality::Audio)?;
        let mut out = Vec::with_capacity(paths.len());
        // Decode one batch at a time so a large dataset never sits in memory at once.
        for chunk in paths.chunks(self.batch) {
            let clips: Vec<AudioClip> = chunk
                .par_iter()
                .map(|p| AudioClip::load(p))
                .collect::<Result<_, _>>()?;
            let keys: Vec<String> = clips.iter().map(|c| self.key(c.content_hash.clone(), seed)).collect();
            out.extend(self.resolve(Modality::Audio, &keys, |idx| {
                let batch: Vec<AudioClip> = idx.iter().map(|&i| clips[i].clone()).collect();
                self.backend.encode_audio(&batch, seed)
            })?);
        }
        Ok(out)
    }

    pub fn embed_audio(&self, paths: &[PathBuf], seed: u64) -> Result<Vec<Embedding>, EncoderError> {
        self.embed_audio_raw(paths, seed)?.into_iter().map(Embedding::unit).collect()
    }
}

pub fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Settings for choosing and constructing a backend.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    /// Mock embedding dimension (default 64).
    pub mock_dimension: Option<usize>,
    /// Mock hashing seed (default 0).
    pub mock_seed: Option<u64>,
    /// Command lines for process backends, keyed by backend id.
    #[serde(default)]
    pub commands: std::collections::BTreeMap<String, Vec<String>>,
    /// Checkpoint files for process backends, keyed by backend id.
    #[serde(default)]
    pub checkpoints: std::collections::BTreeMap<String, PathBuf>,
}

pub const BACKEND_IDS: [&str; 4] = ["mock", "mock-planted", "msclap2022", "msclap2023"];

/// Builds the backend named `backend_id`.
///
/// `labels` are the label texts of the dataset being evaluated; only the
/// planted mock uses them.
pub fn build_backend(
    backend_id: &str,
    config: &BackendConfig,
    labels: &[String],
) -> Result<Box<dyn EncoderBackend>, EncoderError> {
    let dim = config.mock_dimension.unwrap_or(mock::DEFAULT_DIMENSION);
    let seed = config.mock_seed.unwrap_or(0);
    match backend_id {
        "mock" => Ok(Box::new(MockBackend::new(dim, seed)?)),
        "mock-planted" => Ok(Box::new(MockBackend::planted(labels.to_vec(), dim.max(labels.len()), seed)?)),
        "msclap2022" | "msclap2023" => {
            let cfg = ProcessConfig::resolve(backend_id, config)?;
            Ok(Box::new(ProcessBackend::spawn(cfg)?))
        }
        other => Err(EncoderError::BackendLoad(format!(
            "unknown backend `{other}` (expected one of {})",
            BACKEND_IDS.join(", ")
        ))),
    }
}
