//! Zero-shot evaluation, vanilla-vs-TSPE comparison, K sweeps and reports.

pub mod adapters;
pub mod manifest;
pub mod report;
pub mod rundir;
pub mod synth;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, info};

pub use manifest::{DatasetManifest, EvalDataset, ManifestRow};
pub use report::{collect_reports, report_table, ReportTable};
pub use rundir::RunDir;

use crate::curation::{curate_auto, CompatibilityRule, CurationError, PromptSet};
use crate::encoder::{Encoder, EncoderError, Preprocessing};
use crate::ensemble::{classify, ensemble_classes, vanilla_ensembles, AveragingMode, EnsembleError};
use crate::promptgen::PromptCandidate;
use crate::taxonomy::{CategoryId, TaxonomyError};

pub const DEFAULT_RUNS: usize = 5;
pub const DEFAULT_KS: [usize; 6] = [5, 10, 15, 20, 25, 30];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("ManifestError: {0}")]
    Manifest(String),
    #[error("CategoryMismatch: dataset is {expected}, {}", match .found {
        Some(c) => format!("prompt set is {c}"),
        None => "but no prompt set was supplied for the TSPE condition".to_string(),
    })]
    CategoryMismatch {
        expected: CategoryId,
        found: Option<CategoryId>,
    },
    #[error("MismatchedRuns: {0}")]
    MismatchedRuns(String),
    #[error("InvalidSweep: {0}")]
    InvalidSweep(String),
    #[error("InvalidArgument: {0}")]
    InvalidArgument(String),
    #[error("RunDirLocked: {0} is owned by another evaluation (remove its .lock if stale)")]
    Locked(PathBuf),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Curation(#[from] CurationError),
}

impl EvalError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Manifest(_) => "ManifestError",
            Self::CategoryMismatch { .. } => "CategoryMismatch",
            Self::MismatchedRuns(_) => "MismatchedRuns",
            Self::InvalidSweep(_) => "InvalidSweep",
            Self::InvalidArgument(_) => "InvalidArgument",
            Self::Locked(_) => "RunDirLocked",
            Self::Io { .. } => "IoError",
            Self::Taxonomy(e) => e.kind(),
            Self::Encoder(e) => e.kind(),
            Self::Ensemble(e) => e.kind(),
            Self::Curation(e) => e.kind(),
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    Vanilla,
    #[serde(rename = "TSPE")]
    Tspe,
}

impl Condition {
    pub const ALL: [Condition; 2] = [Condition::Vanilla, Condition::Tspe];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Vanilla => "Vanilla",
            Self::Tspe => "TSPE",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "vanilla" => Ok(Self::Vanilla),
            "tspe" => Ok(Self::Tspe),
            _ => Err(EvalError::InvalidArgument(format!("unknown condition `{s}` (vanilla or tspe)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub runs: usize,
    pub seed: u64,
    pub averaging: AveragingMode,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            runs: DEFAULT_RUNS,
            seed: 0,
            averaging: AveragingMode::default(),
        }
    }
}

/// Seed handed to the backend for run `run` (0-based).
pub fn run_seed(seed: u64, run: usize) -> u64 {
    seed.wrapping_add(run as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub dataset_id: String,
    pub category: CategoryId,
    pub split: String,
    pub backend_id: String,
    pub backend_fingerprint: String,
    pub condition: Condition,
    /// Mean of `per_run_accuracies`, in percent.
    pub accuracy: f64,
    pub n_clips: usize,
    pub runs: usize,
    pub per_run_accuracies: Vec<f64>,
    /// True when every run produced the same predictions.
    pub identical_runs: bool,
    pub promptset_hash: Option<String>,
    pub k: Option<usize>,
    pub averaging: AveragingMode,
    pub preprocessing: Preprocessing,
    pub seed: u64,
    pub timestamp: String,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub clip_path: PathBuf,
    pub gold: String,
    pub predicted: String,
    pub top_cosine: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunPredictions {
    pub run: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub rows: Vec<PredictionRow>,
}

impl RunPredictions {
    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 predictions")
    }
}

#[derive(Debug, Clone)]
pub struct EvaluationOutput {
    pub report: EvaluationReport,
    pub runs: Vec<RunPredictions>,
}

/// Evaluates `dataset` under `condition`, averaging accuracy over `opts.runs`.
///
/// Each run passes its own seed to the backend; backends that are not
/// seed-sensitive produce identical runs, and the report says so.
pub fn evaluate(
    dataset: &EvalDataset,
    encoder: &Encoder,
    condition: Condition,
    promptset: Option<&PromptSet>,
    opts: EvalOptions,
) -> Result<EvaluationOutput, EvalError> {
    if opts.runs == 0 {
        return Err(EvalError::InvalidArgument("runs must be at least 1".into()));
    }
    let category = dataset.descriptor.category;
    let promptset = match condition {
        Condition::Vanilla => None,
        Condition::Tspe => {
            let set = promptset.ok_or(EvalError::CategoryMismatch {
                expected: category,
                found: None,
            })?;
            if set.category != category {
                return Err(EvalError::CategoryMismatch {
                    expected: category,
                    found: Some(set.category),
                });
            }
            Some(set)
        }
    };
    let manifest = &dataset.manifest;
    let label_ids: Vec<String> = dataset.labels.iter().map(|(id, _)| id.clone()).collect();
    manifest.validate(&label_ids)?;
    manifest.check_files()?;
    let paths = manifest.clip_paths();
    info!(
        dataset = %dataset.descriptor.dataset_id,
        backend = encoder.backend_id(),
        condition = %condition,
        clips = paths.len(),
        runs = opts.runs,
        "evaluating"
    );

    let mut runs = Vec::with_capacity(opts.runs);
    for run in 0..opts.runs {
        let seed = run_seed(opts.seed, run);
        let ensembles = match promptset {
            None => vanilla_ensembles(category, &dataset.labels, encoder, seed)?,
            Some(set) => ensemble_classes(set, &dataset.labels, encoder, opts.averaging, seed)?,
        };
        let audio = encoder.embed_audio(&paths, seed)?;
        let rows = audio
            .par_iter()
            .zip(&manifest.rows)
            .map(|(emb, row)| {
                let p = classify(emb, &ensembles)?;
                Ok(PredictionRow {
                    clip_path: row.clip_path.clone(),
                    gold: row.label.clone(),
                    predicted: p.label_id,
                    top_cosine: p.cosine,
                })
            })
            .collect::<Result<Vec<_>, EnsembleError>>()?;
        let correct = rows.iter().filter(|r| r.gold == r.predicted).count();
        let accuracy = correct as f64 * 100.0 / rows.len() as f64;
        debug!(run, seed, accuracy, "run finished");
        runs.push(RunPredictions {
            run,
            seed,
            accuracy,
            rows,
        });
    }

    let per_run: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
    let identical_runs = runs.windows(2).all(|w| w[0].rows == w[1].rows);
    let backend = encoder.backend();
    let report = EvaluationReport {
        dataset_id: dataset.descriptor.dataset_id.clone(),
        category,
        split: manifest.split.clone(),
        backend_id: backend.backend_id().to_string(),
        backend_fingerprint: backend.fingerprint(),
        condition,
        accuracy: mean(&per_run),
        n_clips: paths.len(),
        runs: opts.runs,
        per_run_accuracies: per_run,
        identical_runs,
        promptset_hash: promptset.map(PromptSet::content_hash),
        k: promptset.map(|s| s.k),
        averaging: opts.averaging,
        preprocessing: backend.preprocessing(),
        seed: opts.seed,
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    };
    info!(accuracy = report.accuracy, identical_runs, "evaluation done");
    Ok(EvaluationOutput { report, runs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub dataset_id: String,
    pub backend_id: String,
    /// `tspe.accuracy - vanilla.accuracy`, in percentage points.
    pub delta: f64,
    pub vanilla: EvaluationReport,
    pub tspe: EvaluationReport,
}

pub fn compare(vanilla: &EvaluationReport, tspe: &EvaluationReport) -> Result<Comparison, EvalError> {
    if vanilla.dataset_id != tspe.dataset_id || vanilla.backend_id != tspe.backend_id {
        return Err(EvalError::MismatchedRuns(format!(
            "{}/{} vs {}/{}",
            vanilla.dataset_id, vanilla.backend_id, tspe.dataset_id, tspe.backend_id
        )));
    }
    Ok(Comparison {
        dataset_id: tspe.dataset_id.clone(),
        backend_id: tspe.backend_id.clone(),
        delta: tspe.accuracy - vanilla.accuracy,
        vanilla: vanilla.clone(),
        tspe: tspe.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub k: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub dataset_id: String,
    pub backend_id: String,
    pub points: Vec<AblationPoint>,
}

impl AblationResult {
    /// `k,accuracy` lines, one per sweep point.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("k,accuracy\n");
        for p in &self.points {
            s.push_str(&format!("{},{:.4}\n", p.k, p.accuracy));
        }
        s
    }
}

pub fn check_sweep(ks: &[usize]) -> Result<(), EvalError> {
    if ks.is_empty() {
        return Err(EvalError::InvalidSweep("no K values".into()));
    }
    if ks[0] == 0 {
        return Err(EvalError::InvalidSweep("K must be at least 1".into()));
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::InvalidSweep(format!("K values must be strictly increasing: {ks:?}")));
    }
    Ok(())
}

/// TSPE accuracy for each K, using nested prefixes of one auto-curated set
/// so that the K=5 prompts are among the K=10 prompts, and so on.
pub fn ablate_k(
    dataset: &EvalDataset,
    encoder: &Encoder,
    candidates: &[PromptCandidate],
    rules: &[CompatibilityRule],
    ks: &[usize],
    opts: EvalOptions,
) -> Result<AblationResult, EvalError> {
    check_sweep(ks)?;
    let k_max = *ks.last().expect("non-empty sweep");
    let full = curate_auto(dataset.descriptor.category, candidates, rules, k_max)?;
    let mut points = Vec::with_capacity(ks.len());
    for &k in ks {
        let set = full.prefix(k)?;
        let out = evaluate(dataset, encoder, Condition::Tspe, Some(&set), opts)?;
        info!(k, accuracy = out.report.accuracy, "sweep point");
        points.push(AblationPoint {
            k,
            accuracy: out.report.accuracy,
        });
    }
    Ok(AblationResult {
        dataset_id: dataset.descriptor.dataset_id.clone(),
        backend_id: encoder.backend_id().to_string(),
        points,
    })
}
