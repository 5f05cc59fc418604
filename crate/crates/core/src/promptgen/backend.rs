//! Generator backends: the trait and the deterministic offline generator.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::grammar::{bind_pattern, GrammarId, PromptTemplate};
use super::PromptGenError;
use crate::taxonomy::{CategoryId, TaskCategory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "LLM")]
    Llm,
    Offline,
    /// Built into the toolkit (the vanilla baseline template).
    Builtin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TermKind {
    Attribute,
    Source,
}

impl TermKind {
    pub fn plural(self) -> &'static str {
        match self {
            Self::Attribute => "sound attributes",
            Self::Source => "sound sources",
        }
    }
}

/// Ask for `count` new pool terms of one kind.
#[derive(Debug, Clone)]
pub struct TermRequest<'a> {
    pub category_descriptions: &'a [String],
    pub kind: TermKind,
    pub count: usize,
    /// Terms already accepted (of either kind).
    pub exclude: &'a [String],
    pub round: usize,
}

/// Ask for `count` new prompt lines for one category. Lines carry the
/// attribute and source as literal words and leave the `<label>` slot open.
#[derive(Debug, Clone)]
pub struct PromptRequest<'a> {
    pub category: &'a TaskCategory,
    pub example_labels: &'a [String],
    pub attributes: &'a [String],
    pub sources: &'a [String],
    pub count: usize,
    /// Lines already accepted.
    pub exclude: &'a [String],
    pub round: usize,
}

pub trait GeneratorBackend: Send + Sync {
    fn provenance(&self) -> Provenance;

    fn propose_terms(&self, request: &TermRequest<'_>) -> Result<Vec<String>, PromptGenError>;

    fn propose_prompts(&self, request: &PromptRequest<'_>) -> Result<Vec<String>, PromptGenError>;
}

use CategoryId::{
    AcousticScene as AS, ImpactEmergency as IE, MusicGenre as MG, MusicalInstruments as MI,
    NonVerbalVocal as NV,
};

/// Offline attribute lexicon with the categories each term suits.
/// The first five are the examples handed to the generator up front.
pub const ATTRIBUTE_LEXICON: &[(&str, &[CategoryId])] = &[
    ("quiet", &[MI, AS, NV]),
    ("loud", &[MI, AS, MG, IE, NV]),
    ("muted", &[AS, NV]),
    ("faint", &[AS, NV]),
    ("feeble", &[AS, NV]),
    ("melodious", &[MI, MG]),
    ("gentle", &[MI, NV]),
    ("hushed", &[NV]),
    ("soft", &[MI, MG, NV]),
    ("harsh", &[AS, IE]),
    ("deep", &[MI, MG]),
    ("sharp", &[IE, NV]),
    ("rhythmic", &[MI, MG]),
    ("resonant", &[MI]),
    ("booming", &[AS, IE]),
    ("piercing", &[IE]),
    ("distant", &[AS, IE]),
    ("echoing", &[AS, IE]),
    ("muffled", &[AS, IE, NV]),
    ("crisp", &[MI]),
    ("steady", &[AS]),
    ("sudden", &[AS, IE, NV]),
    ("shrill", &[IE]),
    ("warm", &[MI, MG]),
    ("bright", &[MI, MG]),
    ("mellow", &[MI, MG]),
    ("rumbling", &[AS, IE]),
    ("lively", &[MI, MG]),
    ("soothing", &[MI, MG]),
    ("intense", &[MG, IE]),
    ("deafening", &[IE]),
    ("raspy", &[NV]),
    ("breathy", &[NV]),
    ("upbeat", &[MG]),
    ("twangy", &[MI, MG]),
    ("metallic", &[MI, AS, IE]),
    ("constant", &[AS]),
    ("abrupt", &[IE, NV]),
    ("groovy", &[MG]),
    ("percussive", &[MI, MG]),
];

/// Offline source lexicon. The first six are the up-front examples.
pub const SOURCE_LEXICON: &[(&str, &[CategoryId])] = &[
    ("theater", &[MI, MG, NV]),
    ("concert", &[MI, MG]),
    ("room", &[MI, MG, NV]),
    ("opera", &[MI]),
    ("street", &[MI, AS, IE]),
    ("tunnel", &[AS, IE]),
    ("church", &[MI]),
    ("orchestra", &[MI]),
    ("concert hall", &[MI, MG]),
    ("studio", &[MI, MG, NV]),
    ("stage", &[MI, MG]),
    ("road", &[AS, IE]),
    ("park", &[AS]),
    ("train station", &[AS, IE]),
    ("market", &[AS, IE]),
    ("cafe", &[AS, MG, NV]),
    ("office", &[AS, NV]),
    ("parking lot", &[AS, IE]),
    ("university", &[IE]),
    ("hall", &[NV]),
    ("highway", &[AS, IE]),
    ("subway", &[AS, IE, NV]),
    ("city square", &[AS, IE]),
    ("kitchen", &[AS, NV]),
    ("classroom", &[NV]),
    ("hospital", &[IE, NV]),
    ("construction site", &[AS, IE]),
    ("living room", &[MG, NV]),
    ("festival", &[MI, MG]),
    ("nightclub", &[MG]),
    ("airport", &[AS, IE]),
    ("harbor", &[AS]),
    ("forest", &[AS]),
    ("beach", &[AS]),
    ("bedroom", &[NV]),
    ("auditorium", &[MI, MG]),
    ("radio", &[MG]),
    ("warehouse", &[IE]),
    ("bank", &[IE]),
    ("library", &[NV]),
];

const ATTRIBUTE_SEEDS: usize = 5;
const SOURCE_SEEDS: usize = 6;

/// Looks up the categories a lexicon term suits.
pub fn lexicon_affinity(kind: TermKind, term: &str) -> &'static [CategoryId] {
    let lexicon = match kind {
        TermKind::Attribute => ATTRIBUTE_LEXICON,
        TermKind::Source => SOURCE_LEXICON,
    };
    lexicon
        .iter()
        .find(|(t, _)| *t == term)
        .map(|(_, c)| *c)
        .unwrap_or(&[])
}

/// Deterministic generator: a pure function of (seed, request).
#[derive(Debug, Clone)]
pub struct OfflineGenerator {
    seed: u64,
}

impl OfflineGenerator {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn rng(&self, parts: &[&str]) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        for p in parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p.as_bytes());
        }
        let digest: [u8; 32] = h.finalize().into();
        ChaCha8Rng::from_seed(digest)
    }
}

impl GeneratorBackend for OfflineGenerator {
    fn provenance(&self) -> Provenance {
        Provenance::Offline
    }

    fn propose_terms(&self, request: &TermRequest<'_>) -> Result<Vec<String>, PromptGenError> {
        let (lexicon, seeds) = match request.kind {
            TermKind::Attribute => (ATTRIBUTE_LEXICON, ATTRIBUTE_SEEDS),
            TermKind::Source => (SOURCE_LEXICON, SOURCE_SEEDS),
        };
        let excluded: HashSet<&str> = request.exclude.iter().map(String::as_str).collect();
        let mut rest: Vec<&str> = lexicon[seeds..].iter().map(|(t, _)| *t).collect();
        let round = request.round.to_string();
        rest.shuffle(&mut self.rng(&["terms", request.kind.plural(), &round]));
        Ok(lexicon[..seeds]
            .iter()
            .map(|(t, _)| *t)
            .chain(rest)
            .filter(|t| !excluded.contains(t))
            .take(request.count)
            .map(str::to_string)
            .collect())
    }

    fn propose_prompts(&self, request: &PromptRequest<'_>) -> Result<Vec<String>, PromptGenError> {
        let round = request.round.to_string();
        let mut rng = self.rng(&["prompts", request.category.id.as_str(), &round]);
        let mut seen: HashSet<String> = request.exclude.iter().cloned().collect();
        let mut lines = Vec::with_capacity(request.count);
        let max_draws = request.count.saturating_mul(64).max(64);
        for _ in 0..max_draws {
            if lines.len() == request.count {
                break;
            }
            let grammar = GrammarId::GENERATIVE[rng.random_range(0..GrammarId::GENERATIVE.len())];
            let variants = PromptTemplate::variants(grammar);
            let template = &variants[rng.random_range(0..variants.len())];
            let attribute = (grammar.needs_attribute() && !request.attributes.is_empty())
                .then(|| request.attributes[rng.random_range(0..request.attributes.len())].as_str());
            let source = (grammar.needs_source() && !request.sources.is_empty())
                .then(|| request.sources[rng.random_range(0..request.sources.len())].as_str());
            let Ok(line) = bind_pattern(&template.pattern, attribute, source) else {
                continue;
            };
            if seen.insert(line.clone()) {
                lines.push(line);
            }
        }
        Ok(lines)
    }
}
