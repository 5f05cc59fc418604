//! Candidate prompt generation: pools, grammars and the generation drivers.

pub mod article;
pub mod backend;
pub mod grammar;
pub mod pools;
pub mod remote;

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::debug;

pub use backend::{
    GeneratorBackend, OfflineGenerator, PromptRequest, Provenance, TermKind, TermRequest,
};
pub use grammar::{GrammarError, GrammarId, ParsedPrompt, PromptTemplate};
pub use pools::{AttributePool, CategoryPools, PoolSet, PoolSplit, SourcePool, TOTAL_POOL_TERMS};
pub use remote::{RemoteConfig, RemoteGenerator};

use crate::taxonomy::{CategoryId, TaskCategory};

/// Generation gives up after this many backend rounds.
pub const MAX_ROUNDS: usize = 5;

pub const DEFAULT_CANDIDATES: usize = 40;

#[derive(Debug, Error)]
pub enum PromptGenError {
    #[error("BackendUnavailable: {0}")]
    BackendUnavailable(String),
    #[error("BackendResponse: {0}")]
    BackendResponse(String),
    #[error("GenerationExhausted: {0}")]
    GenerationExhausted(String),
    #[error("InvalidPools: {0}")]
    InvalidPools(String),
    #[error("UnmappedCategory: no attribute/source pools are mapped to {0}")]
    UnmappedCategory(CategoryId),
    #[error("InvalidCandidate: {0}")]
    InvalidCandidate(String),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl PromptGenError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::BackendUnavailable(_) => "BackendUnavailable",
            Self::BackendResponse(_) => "BackendResponse",
            Self::GenerationExhausted(_) => "GenerationExhausted",
            Self::InvalidPools(_) => "InvalidPools",
            Self::UnmappedCategory(_) => "UnmappedCategory",
            Self::InvalidCandidate(_) => "InvalidCandidate",
            Self::Grammar(GrammarError::UnboundSlot { .. }) => "UnboundSlot",
            Self::Grammar(_) => "GrammarError",
            Self::Io { .. } => "IoError",
        }
    }
}

/// A generated prompt with attribute/source bound and the label slot free.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawCandidate")]
pub struct PromptCandidate {
    pub category: CategoryId,
    pub grammar_id: GrammarId,
    pub attribute: Option<String>,
    pub source: Option<String>,
    pub pattern: String,
    pub provenance: Provenance,
}

#[derive(Deserialize)]
struct RawCandidate {
    category: CategoryId,
    grammar_id: GrammarId,
    attribute: Option<String>,
    source: Option<String>,
    pattern: String,
    provenance: Provenance,
}

impl TryFrom<RawCandidate> for PromptCandidate {
    type Error = PromptGenError;

    fn try_from(raw: RawCandidate) -> Result<Self, Self::Error> {
        let c = PromptCandidate::new(raw.category, &raw.pattern, raw.attribute, raw.source, raw.provenance)?;
        if c.grammar_id != raw.grammar_id {
            return Err(PromptGenError::InvalidCandidate(format!(
                "pattern `{}` is {} but the record says {}",
                raw.pattern, c.grammar_id, raw.grammar_id
            )));
        }
        Ok(c)
    }
}

impl PromptCandidate {
    /// Builds a candidate from a slotted pattern, checking that the bindings
    /// match exactly the slots the pattern's grammar requires.
    pub fn new(
        category: CategoryId,
        pattern: &str,
        attribute: Option<String>,
        source: Option<String>,
        provenance: Provenance,
    ) -> Result<Self, PromptGenError> {
        let parsed = grammar::parse_pattern(pattern)?;
        let g = parsed.grammar;
        if g.needs_attribute() != attribute.is_some() || g.needs_source() != source.is_some() {
            return Err(PromptGenError::InvalidCandidate(format!(
                "{g} pattern `{pattern}` has bindings attribute={attribute:?} source={source:?}"
            )));
        }
        for term in attribute.iter().chain(source.iter()) {
            pools::normalize_term(term).map_err(PromptGenError::InvalidCandidate)?;
        }
        Ok(Self {
            category,
            grammar_id: g,
            attribute,
            source,
            pattern: parsed.pattern,
            provenance,
        })
    }

    /// The generic single-template baseline as a candidate.
    pub fn vanilla(category: CategoryId) -> Self {
        Self {
            category,
            grammar_id: GrammarId::Vanilla,
            attribute: None,
            source: None,
            pattern: PromptTemplate::canonical(GrammarId::Vanilla).pattern,
            provenance: Provenance::Builtin,
        }
    }

    pub fn render(&self, label_text: &str) -> Result<String, GrammarError> {
        grammar::render(
            &self.pattern,
            self.attribute.as_deref(),
            label_text,
            self.source.as_deref(),
        )
    }

    /// The prompt with attribute and source bound and `<label>` still open.
    pub fn bound_line(&self) -> String {
        grammar::bind_pattern(&self.pattern, self.attribute.as_deref(), self.source.as_deref())
            .expect("candidate bindings are validated on construction")
    }

    /// Checks attribute/source membership in the category's pools.
    pub fn check_pools(&self, pools: &CategoryPools) -> Result<(), String> {
        if let Some(a) = &self.attribute {
            if !pools.attributes.contains(a) {
                return Err(format!("attribute `{a}` is not in {}", pools.attributes.pool_id));
            }
        }
        if let Some(s) = &self.source {
            if !pools.sources.contains(s) {
                return Err(format!("source `{s}` is not in {}", pools.sources.pool_id));
            }
        }
        Ok(())
    }
}

/// Renders a candidate for one class label.
pub fn render(candidate: &PromptCandidate, label_text: &str) -> Result<String, GrammarError> {
    candidate.render(label_text)
}

/// The generic baseline prompt, "This is the sound of a <label>".
pub fn vanilla_prompt(label_text: &str) -> Result<String, GrammarError> {
    grammar::render(
        &PromptTemplate::canonical(GrammarId::Vanilla).pattern,
        None,
        label_text,
        None,
    )
}

/// Counts of what happened to backend output during generation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GenerationReport {
    pub rounds: usize,
    pub proposed: usize,
    pub accepted: usize,
    pub rejected_unparseable: usize,
    pub rejected_shape: usize,
    pub rejected_pool: usize,
    pub rejected_duplicate: usize,
}

#[derive(Debug, Clone)]
pub struct GeneratedPools {
    pub attributes: AttributePool,
    pub sources: SourcePool,
    pub report: GenerationReport,
}

/// Collects `split.attributes + split.sources` unique, well-shaped pool terms
/// from the backend, re-asking for the shortfall for up to [`MAX_ROUNDS`] rounds.
pub fn generate_pools(
    category_descriptions: &[String],
    backend: &dyn GeneratorBackend,
    split: PoolSplit,
) -> Result<GeneratedPools, PromptGenError> {
    let mut attributes: Vec<String> = Vec::new();
    let mut sources: Vec<String> = Vec::new();
    let mut report = GenerationReport::default();

    for round in 0..MAX_ROUNDS {
        if attributes.len() == split.attributes && sources.len() == split.sources {
            break;
        }
        report.rounds += 1;
        for kind in [TermKind::Attribute, TermKind::Source] {
            let (target, have) = match kind {
                TermKind::Attribute => (split.attributes, attributes.len()),
                TermKind::Source => (split.sources, sources.len()),
            };
            if have >= target {
                continue;
            }
            let exclude: Vec<String> = attributes.iter().chain(sources.iter()).cloned().collect();
            let proposals = backend.propose_terms(&TermRequest {
                category_descriptions,
                kind,
                count: target - have,
                exclude: &exclude,
                round,
            })?;
            let mut seen: HashSet<String> = exclude.into_iter().collect();
            for raw in proposals {
                report.proposed += 1;
                let term = match pools::normalize_term(&raw) {
                    Ok(t) => t,
                    Err(reason) => {
                        debug!(term = %raw, %reason, "pool term rejected");
                        report.rejected_shape += 1;
                        continue;
                    }
                };
                if !seen.insert(term.clone()) {
                    report.rejected_duplicate += 1;
                    continue;
                }
                let list = match kind {
                    TermKind::Attribute => &mut attributes,
                    TermKind::Source => &mut sources,
                };
                if list.len() < target {
                    list.push(term);
                    report.accepted += 1;
                }
            }
        }
    }

    if attributes.len() != split.attributes || sources.len() != split.sources {
        return Err(PromptGenError::GenerationExhausted(format!(
            "collected {}/{} attributes and {}/{} sources after {MAX_ROUNDS} rounds",
            attributes.len(),
            split.attributes,
            sources.len(),
            split.sources
        )));
    }
    Ok(GeneratedPools {
        attributes: AttributePool {
            pool_id: "master.attributes".into(),
            attributes,
        },
        sources: SourcePool {
            pool_id: "master.sources".into(),
            sources,
        },
        report,
    })
}

/// Builds a pool file from generated master pools. Terms known to the
/// offline lexicon are mapped by their category affinity; any other term is
/// mapped to every category and must be pruned by hand.
pub fn map_pools(generated: &GeneratedPools, provenance: Provenance) -> PoolSet {
    let mut categories = BTreeMap::new();
    for id in CategoryId::ALL {
        let pick = |kind: TermKind, terms: &[String]| -> Vec<String> {
            terms
                .iter()
                .filter(|t| {
                    let aff = backend::lexicon_affinity(kind, t);
                    aff.is_empty() || aff.contains(&id)
                })
                .cloned()
                .collect()
        };
        let cc = id.category();
        categories.insert(
            id,
            CategoryPools {
                attributes: AttributePool {
                    pool_id: cc.attribute_pool_ref,
                    attributes: pick(TermKind::Attribute, &generated.attributes.attributes),
                },
                sources: SourcePool {
                    pool_id: cc.source_pool_ref,
                    sources: pick(TermKind::Source, &generated.sources.sources),
                },
            },
        );
    }
    PoolSet {
        provenance: match provenance {
            Provenance::Llm => "llm".into(),
            Provenance::Offline => "offline".into(),
            Provenance::Builtin => "builtin".into(),
        },
        attributes: generated.attributes.clone(),
        sources: generated.sources.clone(),
        categories,
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedCandidates {
    pub candidates: Vec<PromptCandidate>,
    pub report: GenerationReport,
}

/// Produces exactly `n` candidates for a category. Backend lines that do not
/// parse into one of the three grammars, use terms outside the category's
/// pools, or repeat an accepted candidate are dropped and counted.
pub fn generate_candidates(
    category: &TaskCategory,
    pools: &CategoryPools,
    example_labels: &[String],
    n: usize,
    backend: &dyn GeneratorBackend,
) -> Result<GeneratedCandidates, PromptGenError> {
    if n == 0 {
        return Err(PromptGenError::InvalidCandidate("n must be at least 1".into()));
    }
    let mut accepted: Vec<PromptCandidate> = Vec::with_capacity(n);
    let mut lines: Vec<String> = Vec::with_capacity(n);
    let mut report = GenerationReport::default();

    for round in 0..MAX_ROUNDS {
        if accepted.len() == n {
            break;
        }
        report.rounds += 1;
        let proposals = backend.propose_prompts(&PromptRequest {
            category,
            example_labels,
            attributes: &pools.attributes.attributes,
            sources: &pools.sources.sources,
            count: n - accepted.len(),
            exclude: &lines,
            round,
        })?;
        for line in proposals {
            if accepted.len() == n {
                break;
            }
            report.proposed += 1;
            let parsed = match grammar::parse_generated_line(&line) {
                Ok(p) if p.grammar != GrammarId::Vanilla => p,
                _ => {
                    debug!(%line, "generated line does not parse");
                    report.rejected_unparseable += 1;
                    continue;
                }
            };
            let candidate = match PromptCandidate::new(
                category.id,
                &parsed.pattern,
                parsed.attribute,
                parsed.source,
                backend.provenance(),
            ) {
                Ok(c) => c,
                Err(_) => {
                    report.rejected_shape += 1;
                    continue;
                }
            };
            if let Err(reason) = candidate.check_pools(pools) {
                debug!(%line, %reason, "generated line outside pools");
                report.rejected_pool += 1;
                continue;
            }
            let bound = candidate.bound_line();
            if lines.contains(&bound) {
                report.rejected_duplicate += 1;
                continue;
            }
            lines.push(bound);
            accepted.push(candidate);
            report.accepted += 1;
        }
    }

    if accepted.len() != n {
        return Err(PromptGenError::GenerationExhausted(format!(
            "{} of {n} candidates for {} after {MAX_ROUNDS} rounds",
            accepted.len(),
            category.id
        )));
    }
    Ok(GeneratedCandidates {
        candidates: accepted,
        report,
    })
}

/// Writes candidates as JSON Lines, one record per candidate.
pub fn write_candidates<W: Write>(mut out: W, candidates: &[PromptCandidate]) -> std::io::Result<()> {
    for c in candidates {
        serde_json::to_writer(&mut out, c)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn save_candidates(path: &Path, candidates: &[PromptCandidate]) -> Result<(), PromptGenError> {
    let io_err = |source| PromptGenError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    write_candidates(std::io::BufWriter::new(file), candidates).map_err(io_err)
}

pub fn read_candidates<R: BufRead>(input: R) -> Result<Vec<PromptCandidate>, PromptGenError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| PromptGenError::InvalidCandidate(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let c: PromptCandidate = serde_json::from_str(&line)
            .map_err(|e| PromptGenError::InvalidCandidate(format!("line {}: {e}", i + 1)))?;
        out.push(c);
    }
    Ok(out)
}

pub fn load_candidates(path: &Path) -> Result<Vec<PromptCandidate>, PromptGenError> {
    let file = std::fs::File::open(path).map_err(|source| PromptGenError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_candidates(std::io::BufReader::new(file))
}
