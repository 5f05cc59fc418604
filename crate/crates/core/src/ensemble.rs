//! Prompt-ensemble class vectors and cosine-argmax classification.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curation::PromptSet;
use crate::encoder::{dot, l2_norm, Embedding, Encoder, EncoderError, ZERO_NORM};
use crate::promptgen::GrammarError;
use crate::taxonomy::CategoryId;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("ZeroVector: the mean embedding for `{label_id}` has norm below 1e-12")]
    ZeroVector { label_id: String },
    #[error("DimensionMismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("EmptyInput: {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

impl EnsembleError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::ZeroVector { .. } => "ZeroVector",
            Self::DimensionMismatch { .. } => "DimensionMismatch",
            Self::Empty(_) => "EmptyInput",
            Self::Encoder(e) => e.kind(),
            Self::Grammar(_) => "GrammarError",
        }
    }
}

/// Order of normalization and averaging when building a class vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AveragingMode {
    /// Normalize each prompt embedding, average, renormalize.
    #[default]
    NormalizeThenAverage,
    /// Average the raw backend vectors, then normalize.
    AverageThenNormalize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEnsemble {
    pub label_id: String,
    pub vector: Embedding,
    pub k_used: usize,
    pub promptset_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label_id: String,
    pub cosine: f64,
}

/// One cosine per class, in the dataset's label order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub scores: Vec<LabelScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label_id: String,
    pub index: usize,
    pub cosine: f64,
    pub scores: ScoreVector,
}

fn unit_or_zero(label_id: &str, v: Vec<f64>) -> Result<Vec<f64>, EnsembleError> {
    let n = l2_norm(&v);
    if n.is_nan() || n < ZERO_NORM {
        return Err(EnsembleError::ZeroVector {
            label_id: label_id.to_string(),
        });
    }
    Ok(v.into_iter().map(|x| x / n).collect())
}

/// Builds a class vector from the backend vectors of its K rendered prompts.
pub fn ensemble_from_vectors(
    label_id: &str,
    vectors: &[Vec<f64>],
    mode: AveragingMode,
    promptset_hash: &str,
) -> Result<ClassEnsemble, EnsembleError> {
    let first = vectors.first().ok_or(EnsembleError::Empty("prompt embeddings"))?;
    let d = first.len();
    if let Some(v) = vectors.iter().find(|v| v.len() != d) {
        return Err(EnsembleError::DimensionMismatch {
            expected: d,
            found: v.len(),
        });
    }
    let mut sum = vec![0.0; d];
    for v in vectors {
        let v = match mode {
            AveragingMode::NormalizeThenAverage => unit_or_zero(label_id, v.clone())?,
            AveragingMode::AverageThenNormalize => v.clone(),
        };
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
    }
    let k = vectors.len() as f64;
    let mean: Vec<f64> = sum.into_iter().map(|s| s / k).collect();
    Ok(ClassEnsemble {
        label_id: label_id.to_string(),
        vector: Embedding {
            values: unit_or_zero(label_id, mean)?,
            normalized: true,
        },
        k_used: vectors.len(),
        promptset_hash: promptset_hash.to_string(),
    })
}

/// Ensembles for every `(label_id, label_text)` pair, embedding all rendered
/// prompts in one batch.
pub fn ensemble_classes(
    promptset: &PromptSet,
    labels: &[(String, String)],
    encoder: &Encoder,
    mode: AveragingMode,
    seed: u64,
) -> Result<Vec<ClassEnsemble>, EnsembleError> {
    if promptset.prompts.is_empty() {
        return Err(EnsembleError::Empty("prompt set"));
    }
    if labels.is_empty() {
        return Err(EnsembleError::Empty("label list"));
    }
    let k = promptset.prompts.len();
    let mut texts = Vec::with_capacity(k * labels.len());
    for (_, text) in labels {
        for p in &promptset.prompts {
            texts.push(p.render(text)?);
        }
    }
    let vectors = encoder.embed_text_raw(&texts, seed)?;
    let hash = promptset.content_hash();
    labels
        .iter()
        .zip(vectors.chunks(k))
        .map(|((id, _), vs)| ensemble_from_vectors(id, vs, mode, &hash))
        .collect()
}

pub fn ensemble_class(
    promptset: &PromptSet,
    label_id: &str,
    label_text: &str,
    encoder: &Encoder,
    mode: AveragingMode,
    seed: u64,
) -> Result<ClassEnsemble, EnsembleError> {
    let labels = [(label_id.to_string(), label_text.to_string())];
    Ok(ensemble_classes(promptset, &labels, encoder, mode, seed)?.remove(0))
}

/// Class vectors from the single generic template, one prompt per class.
pub fn vanilla_ensembles(
    category: CategoryId,
    labels: &[(String, String)],
    encoder: &Encoder,
    seed: u64,
) -> Result<Vec<ClassEnsemble>, EnsembleError> {
    ensemble_classes(&PromptSet::vanilla(category), labels, encoder, AveragingMode::default(), seed)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let denom = l2_norm(a) * l2_norm(b);
    if denom == 0.0 {
        return 0.0;
    }
    (dot(a, b) / denom).clamp(-1.0, 1.0)
}

/// Argmax-cosine class; ties go to the lowest index.
pub fn classify(audio: &Embedding, ensembles: &[ClassEnsemble]) -> Result<Prediction, EnsembleError> {
    if ensembles.is_empty() {
        return Err(EnsembleError::Empty("ensembles"));
    }
    if let Some(e) = ensembles.iter().find(|e| e.vector.dim() != audio.dim()) {
        return Err(EnsembleError::DimensionMismatch {
            expected: e.vector.dim(),
            found: audio.dim(),
        });
    }
    if audio.norm().is_nan() || audio.norm() < ZERO_NORM {
        return Err(EnsembleError::ZeroVector {
            label_id: "<audio>".into(),
        });
    }
    let scores: Vec<LabelScore> = ensembles
        .iter()
        .map(|e| LabelScore {
            label_id: e.label_id.clone(),
            cosine: cosine(&audio.values, &e.vector.values),
        })
        .collect();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if s.cosine > scores[best].cosine {
            best = i;
        }
    }
    Ok(Prediction {
        label_id: scores[best].label_id.clone(),
        index: best,
        cosine: scores[best].cosine,
        scores: ScoreVector { scores },
    })
}

/// Baseline classification with one vanilla prompt per class.
pub fn classify_vanilla(
    audio: &Embedding,
    category: CategoryId,
    labels: &[(String, String)],
    encoder: &Encoder,
    seed: u64,
) -> Result<Prediction, EnsembleError> {
    classify(audio, &vanilla_ensembles(category, labels, encoder, seed)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::MockBackend;

    fn ens(label: &str, v: Vec<f64>) -> ClassEnsemble {
        ensemble_from_vectors(label, &[v], AveragingMode::default(), "h").unwrap()
    }

    #[test]
    fn single_prompt_reduces_to_itself() {
        let v = vec![0.3, -0.4, 1.2];
        let e = ensemble_from_vectors("x", std::slice::from_ref(&v), AveragingMode::default(), "h").unwrap();
        let want = Embedding::unit(v).unwrap();
        for (a, b) in e.vector.values.iter().zip(&want.values) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert_eq!(e.k_used, 1);
    }

    #[test]
    fn duplicates_and_antipodes() {
        let v = vec![1.0, 2.0, 2.0];
        let e = ensemble_from_vectors("x", &vec![v.clone(); 5], AveragingMode::default(), "h").unwrap();
        assert!((e.vector.values[1] - 2.0 / 3.0).abs() < 1e-15);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        for mode in [AveragingMode::NormalizeThenAverage, AveragingMode::AverageThenNormalize] {
            let err = ensemble_from_vectors("x", &[v.clone(), neg.clone()], mode, "h").unwrap_err();
            assert_eq!(err.kind(), "ZeroVector");
        }
    }

    #[test]
    fn averaging_modes_differ_on_unequal_norms() {
        let vs = vec![vec![10.0, 0.0], vec![0.0, 1.0]];
        let a = ensemble_from_vectors("x", &vs, AveragingMode::NormalizeThenAverage, "h").unwrap();
        let b = ensemble_from_vectors("x", &vs, AveragingMode::AverageThenNormalize, "h").unwrap();
        assert!((a.vector.values[0] - a.vector.values[1]).abs() < 1e-12);
        assert!(b.vector.values[0] > 0.99);
    }

    #[test]
    fn self_match_and_ties() {
        let es = vec![ens("a", vec![1.0, 0.0, 0.0]), ens("b", vec![0.0, 1.0, 0.0]), ens("c", vec![0.0, 1.0, 0.0])];
        let p = classify(&Embedding::unit(vec![0.0, 1.0, 0.0]).unwrap(), &es).unwrap();
        assert_eq!((p.label_id.as_str(), p.index), ("b", 1));
        assert_eq!(p.cosine, 1.0);
        assert_eq!(p.scores.scores[0].cosine, 0.0);
        let scaled = classify(&Embedding::raw(vec![0.0, 7.5, 0.0]), &es).unwrap();
        assert_eq!(scaled.scores, p.scores);
    }

    #[test]
    fn classify_preconditions() {
        let es = vec![ens("a", vec![1.0, 0.0])];
        assert_eq!(classify(&Embedding::raw(vec![1.0]), &es).unwrap_err().kind(), "DimensionMismatch");
        assert_eq!(classify(&Embedding::raw(vec![1.0]), &[]).unwrap_err().kind(), "EmptyInput");
        assert_eq!(classify(&Embedding::raw(vec![0.0, 0.0]), &es).unwrap_err().kind(), "ZeroVector");
        let only = classify(&Embedding::raw(vec![-1.0, 0.0]), &es).unwrap();
        assert_eq!(only.label_id, "a");
    }

    #[test]
    fn vanilla_is_one_prompt_ensemble() {
        let labels = vec![("dog".to_string(), "dog".to_string()), ("cat".to_string(), "cat".to_string())];
        let enc = Encoder::new(Box::new(MockBackend::planted(vec!["dog".into(), "cat".into()], 4, 0).unwrap()));
        let v = vanilla_ensembles(CategoryId::AcousticScene, &labels, &enc, 0).unwrap();
        let direct = enc.embed_text(&["This is the sound of a cat".into()], 0).unwrap();
        assert_eq!(v[1].k_used, 1);
        for (a, b) in v[1].vector.values.iter().zip(&direct[0].values) {
            assert!((a - b).abs() <= 1e-12);
        }
        let audio = Embedding::unit(vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let p = classify_vanilla(&audio, CategoryId::AcousticScene, &labels, &enc, 0).unwrap();
        assert_eq!(p.label_id, "cat");
    }
}
