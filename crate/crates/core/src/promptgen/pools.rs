//! Sound attribute / sound source pools and the pool file format.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PromptGenError;
use crate::taxonomy::CategoryId;

pub const SHIPPED_POOLS: &str = include_str!("../../data/pools.toml");

/// Combined number of attribute and source terms.
pub const TOTAL_POOL_TERMS: usize = 60;

const MAX_TERM_WORDS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributePool {
    pub pool_id: String,
    pub attributes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourcePool {
    pub pool_id: String,
    pub sources: Vec<String>,
}

impl AttributePool {
    pub fn contains(&self, term: &str) -> bool {
        self.attributes.iter().any(|a| a == term)
    }
}

impl SourcePool {
    pub fn contains(&self, term: &str) -> bool {
        self.sources.iter().any(|s| s == term)
    }
}

/// How the 60 pool terms are split between attributes and sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSplit {
    pub attributes: usize,
    pub sources: usize,
}

impl Default for PoolSplit {
    fn default() -> Self {
        Self {
            attributes: 30,
            sources: 30,
        }
    }
}

impl PoolSplit {
    pub fn new(attributes: usize, sources: usize) -> Result<Self, PromptGenError> {
        if attributes + sources != TOTAL_POOL_TERMS || attributes == 0 || sources == 0 {
            return Err(PromptGenError::InvalidPools(format!(
                "split {attributes}/{sources} must be two positive counts summing to {TOTAL_POOL_TERMS}"
            )));
        }
        Ok(Self { attributes, sources })
    }
}

/// Normalizes a proposed pool term and checks the single-phrase shape rule.
///
/// Returns the normalized term, or the reason it was rejected.
pub fn normalize_term(raw: &str) -> Result<String, String> {
    let mut s = raw.trim();
    s = s.trim_start_matches(|c: char| c.is_ascii_digit() || matches!(c, '.' | ')' | '-' | '*'));
    let s = s
        .trim()
        .trim_matches(|c| matches!(c, '"' | '\'' | '`' | '.' | ',' | ';'))
        .to_lowercase();
    let term = s.split_whitespace().collect::<Vec<_>>().join(" ");
    if term.is_empty() {
        return Err("empty term".into());
    }
    if term.contains(['<', '>']) {
        return Err(format!("`{term}` contains slot markers"));
    }
    if !term
        .chars()
        .all(|c| c.is_ascii_lowercase() || matches!(c, ' ' | '-' | '\''))
    {
        return Err(format!("`{term}` contains characters outside a-z, space, hyphen"));
    }
    let words: Vec<&str> = term.split(' ').collect();
    if words.len() > MAX_TERM_WORDS {
        return Err(format!("`{term}` is longer than {MAX_TERM_WORDS} words"));
    }
    if matches!(words[0], "a" | "an" | "the") {
        return Err(format!("`{term}` starts with an article"));
    }
    if ["sound of", "coming from", "heard from"]
        .iter()
        .any(|p| term.contains(p))
    {
        return Err(format!("`{term}` contains template wording"));
    }
    Ok(term)
}

/// The per-category slice of the pools.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryPools {
    pub attributes: AttributePool,
    pub sources: SourcePool,
}

/// A pool file: the master attribute/source lists and their category mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolSet {
    pub provenance: String,
    pub attributes: AttributePool,
    pub sources: SourcePool,
    pub categories: BTreeMap<CategoryId, CategoryPools>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPoolFile {
    provenance: String,
    attribute_count: usize,
    source_count: usize,
    attributes: Vec<String>,
    sources: Vec<String>,
    #[serde(default)]
    categories: BTreeMap<String, RawCategory>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCategory {
    attributes: Vec<String>,
    sources: Vec<String>,
}

fn check_list(kind: &str, terms: &[String]) -> Result<(), PromptGenError> {
    let mut seen = HashSet::new();
    for t in terms {
        let norm = normalize_term(t).map_err(|e| PromptGenError::InvalidPools(format!("{kind}: {e}")))?;
        if &norm != t {
            return Err(PromptGenError::InvalidPools(format!(
                "{kind}: `{t}` is not in normalized form (`{norm}`)"
            )));
        }
        if !seen.insert(t.as_str()) {
            return Err(PromptGenError::InvalidPools(format!("{kind}: duplicate `{t}`")));
        }
    }
    Ok(())
}

impl PoolSet {
    pub fn shipped() -> Self {
        Self::from_toml_str(SHIPPED_POOLS).expect("shipped pools are valid")
    }

    pub fn load(path: &Path) -> Result<Self, PromptGenError> {
        let text = std::fs::read_to_string(path).map_err(|e| PromptGenError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, PromptGenError> {
        let raw: RawPoolFile =
            toml::from_str(text).map_err(|e| PromptGenError::InvalidPools(e.to_string()))?;
        check_list("attributes", &raw.attributes)?;
        check_list("sources", &raw.sources)?;
        if raw.attributes.len() != raw.attribute_count || raw.sources.len() != raw.source_count {
            return Err(PromptGenError::InvalidPools(format!(
                "header declares {}/{} terms but the file lists {}/{}",
                raw.attribute_count,
                raw.source_count,
                raw.attributes.len(),
                raw.sources.len()
            )));
        }
        PoolSplit::new(raw.attribute_count, raw.source_count)?;

        let attributes = AttributePool {
            pool_id: "master.attributes".into(),
            attributes: raw.attributes,
        };
        let sources = SourcePool {
            pool_id: "master.sources".into(),
            sources: raw.sources,
        };
        let mut categories = BTreeMap::new();
        for (name, cat) in raw.categories {
            let id: CategoryId = name
                .parse()
                .map_err(|_| PromptGenError::InvalidPools(format!("unknown category `{name}`")))?;
            check_list(&format!("{id}.attributes"), &cat.attributes)?;
            check_list(&format!("{id}.sources"), &cat.sources)?;
            if let Some(t) = cat.attributes.iter().find(|t| !attributes.contains(t)) {
                return Err(PromptGenError::InvalidPools(format!(
                    "{id}: attribute `{t}` is not in the master attribute pool"
                )));
            }
            if let Some(t) = cat.sources.iter().find(|t| !sources.contains(t)) {
                return Err(PromptGenError::InvalidPools(format!(
                    "{id}: source `{t}` is not in the master source pool"
                )));
            }
            let cc = id.category();
            categories.insert(
                id,
                CategoryPools {
                    attributes: AttributePool {
                        pool_id: cc.attribute_pool_ref,
                        attributes: cat.attributes,
                    },
                    sources: SourcePool {
                        pool_id: cc.source_pool_ref,
                        sources: cat.sources,
                    },
                },
            );
        }
        Ok(Self {
            provenance: raw.provenance,
            attributes,
            sources,
            categories,
        })
    }

    pub fn to_toml_string(&self) -> String {
        let raw = RawPoolFile {
            provenance: self.provenance.clone(),
            attribute_count: self.attributes.attributes.len(),
            source_count: self.sources.sources.len(),
            attributes: self.attributes.attributes.clone(),
            sources: self.sources.sources.clone(),
            categories: self
                .categories
                .iter()
                .map(|(id, p)| {
                    (
                        id.as_str().to_string(),
                        RawCategory {
                            attributes: p.attributes.attributes.clone(),
                            sources: p.sources.sources.clone(),
                        },
                    )
                })
                .collect(),
        };
        toml::to_string_pretty(&raw).expect("pool file serializes")
    }

    pub fn for_category(&self, id: CategoryId) -> Result<&CategoryPools, PromptGenError> {
        self.categories
            .get(&id)
            .filter(|p| !p.attributes.attributes.is_empty() && !p.sources.sources.is_empty())
            .ok_or(PromptGenError::UnmappedCategory(id))
    }
}
