//! Filtering candidates down to a curated prompt set of size K.
//!
//! Candidates first go through the Deny rules; survivors are then shown to a
//! [`Reviewer`] in candidate order until K are accepted. [`AutoReviewer`]
//! accepts everything (first K survivors); [`TerminalReviewer`] asks a human.

pub mod review;
pub mod rules;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use review::{AutoReviewer, ReviewDecision, ReviewItem, Reviewer, TerminalReviewer, TranscriptEntry};
pub use rules::{check_compatibility, CompatibilityRule, CompatibilityVerdict, RuleScope, RuleTable, Verdict};

use crate::promptgen::{write_candidates, GrammarId, PromptCandidate};
use crate::taxonomy::CategoryId;

pub const DEFAULT_K: usize = 20;

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("InsufficientCandidates: {available} candidates survive the Deny rules, {k} needed")]
    InsufficientCandidates { available: usize, k: usize },
    #[error("ReviewAborted: review stopped with {accepted} of {k} prompts accepted")]
    ReviewAborted { accepted: usize, k: usize },
    #[error("CategoryMismatch: candidate for {found} in a {expected} curation")]
    CategoryMismatch { expected: CategoryId, found: CategoryId },
    #[error("InvalidRules: {0}")]
    InvalidRules(String),
    #[error("InvalidPromptSet: {0}")]
    InvalidPromptSet(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("review terminal I/O failed: {0}")]
    Terminal(#[from] std::io::Error),
}

impl CurationError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::InsufficientCandidates { .. } => "InsufficientCandidates",
            Self::ReviewAborted { .. } => "ReviewAborted",
            Self::CategoryMismatch { .. } => "CategoryMismatch",
            Self::InvalidRules(_) => "InvalidRules",
            Self::InvalidPromptSet(_) => "InvalidPromptSet",
            Self::Io { .. } | Self::Terminal(_) => "IoError",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurationMode {
    Interactive,
    Auto,
}

/// The K accepted prompts for one task category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub category: CategoryId,
    pub k: usize,
    pub prompts: Vec<PromptCandidate>,
    /// SHA-256 of the candidate list the set was curated from.
    pub created_from: String,
    pub reviewer: String,
    pub reviewed_at: String,
    pub mode: CurationMode,
}

/// SHA-256 over the JSON Lines encoding of a candidate list.
pub fn candidates_hash(candidates: &[PromptCandidate]) -> String {
    let mut buf = Vec::new();
    write_candidates(&mut buf, candidates).expect("writing to memory");
    hex::encode(Sha256::digest(&buf))
}

impl PromptSet {
    /// A one-prompt set holding only the generic baseline template.
    pub fn vanilla(category: CategoryId) -> Self {
        let prompts = vec![PromptCandidate::vanilla(category)];
        Self {
            category,
            k: 1,
            created_from: candidates_hash(&prompts),
            prompts,
            reviewer: "builtin".into(),
            reviewed_at: "1970-01-01T00:00:00Z".into(),
            mode: CurationMode::Auto,
        }
    }

    fn validate(&self) -> Result<(), CurationError> {
        if self.prompts.len() != self.k || self.k == 0 {
            return Err(CurationError::InvalidPromptSet(format!(
                "k = {} but {} prompts are listed",
                self.k,
                self.prompts.len()
            )));
        }
        if let Some(p) = self.prompts.iter().find(|p| p.category != self.category) {
            return Err(CurationError::CategoryMismatch {
                expected: self.category,
                found: p.category,
            });
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("prompt set serializes");
        s.push('\n');
        s
    }

    pub fn from_json_str(text: &str) -> Result<Self, CurationError> {
        let set: PromptSet =
            serde_json::from_str(text).map_err(|e| CurationError::InvalidPromptSet(e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    /// Identifies the set in reports and ensembles.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json_string().as_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<(), CurationError> {
        std::fs::write(path, self.to_json_string()).map_err(|source| CurationError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CurationError> {
        let text = std::fs::read_to_string(path).map_err(|source| CurationError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    /// Deny rules violated by any prompt in the set.
    pub fn violations(&self, rules: &[CompatibilityRule]) -> Vec<(usize, CompatibilityRule)> {
        self.prompts
            .iter()
            .enumerate()
            .flat_map(|(i, p)| {
                check_compatibility(p, rules)
                    .violated
                    .into_iter()
                    .map(move |r| (i, r))
            })
            .collect()
    }

    /// The first `k` prompts as a new set; used for nested K sweeps.
    pub fn prefix(&self, k: usize) -> Result<Self, CurationError> {
        if k == 0 || k > self.prompts.len() {
            return Err(CurationError::InsufficientCandidates {
                available: self.prompts.len(),
                k,
            });
        }
        Ok(Self {
            k,
            prompts: self.prompts[..k].to_vec(),
            ..self.clone()
        })
    }

    pub fn is_vanilla_only(&self) -> bool {
        self.prompts.iter().all(|p| p.grammar_id == GrammarId::Vanilla)
    }
}

#[derive(Debug, Clone)]
pub struct CurationOutcome {
    pub set: PromptSet,
    pub denied: usize,
    pub transcript: Vec<TranscriptEntry>,
}

/// Drops Deny-matched candidates and walks the survivors with `reviewer`
/// until `k` are accepted.
pub fn curate(
    category: CategoryId,
    candidates: &[PromptCandidate],
    rules: &[CompatibilityRule],
    k: usize,
    reviewer: &mut dyn Reviewer,
    preview_label: Option<&str>,
) -> Result<CurationOutcome, CurationError> {
    if let Some(c) = candidates.iter().find(|c| c.category != category) {
        return Err(CurationError::CategoryMismatch {
            expected: category,
            found: c.category,
        });
    }
    let survivors: Vec<(&PromptCandidate, CompatibilityVerdict)> = candidates
        .iter()
        .map(|c| (c, check_compatibility(c, rules)))
        .filter(|(_, v)| v.verdict == Verdict::Allow)
        .collect();
    let denied = candidates.len() - survivors.len();
    if k == 0 || survivors.len() < k {
        return Err(CurationError::InsufficientCandidates {
            available: survivors.len(),
            k,
        });
    }

    let mut accepted = Vec::with_capacity(k);
    let mut transcript = Vec::new();
    for (index, (candidate, verdict)) in survivors.iter().enumerate() {
        if accepted.len() == k {
            break;
        }
        let preview = preview_label.and_then(|l| candidate.render(l).ok());
        let item = ReviewItem {
            index,
            total: survivors.len(),
            accepted: accepted.len(),
            target: k,
            candidate,
            preview: preview.as_deref(),
            verdict,
        };
        let decision = reviewer.review(&item)?;
        transcript.push(TranscriptEntry {
            index,
            line: candidate.bound_line(),
            decision,
        });
        match decision {
            ReviewDecision::Accept => accepted.push((*candidate).clone()),
            ReviewDecision::Reject => {}
            ReviewDecision::Quit => {
                return Err(CurationError::ReviewAborted {
                    accepted: accepted.len(),
                    k,
                })
            }
        }
    }
    if accepted.len() < k {
        return Err(CurationError::InsufficientCandidates {
            available: accepted.len(),
            k,
        });
    }

    Ok(CurationOutcome {
        set: PromptSet {
            category,
            k,
            prompts: accepted,
            created_from: candidates_hash(candidates),
            reviewer: reviewer.name(),
            reviewed_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            mode: reviewer.mode(),
        },
        denied,
        transcript,
    })
}

/// Non-interactive curation: the first `k` survivors in candidate order.
pub fn curate_auto(
    category: CategoryId,
    candidates: &[PromptCandidate],
    rules: &[CompatibilityRule],
    k: usize,
) -> Result<PromptSet, CurationError> {
    curate(category, candidates, rules, k, &mut AutoReviewer::default(), None).map(|o| o.set)
}
