use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CurationError;
use crate::promptgen::PromptCandidate;
use crate::taxonomy::CategoryId;

pub const SHIPPED_RULES: &str = include_str!("../../data/rules.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RuleScope {
    AttributeLabel,
    SourceLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Allow,
    Deny,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompatibilityRule {
    pub scope: RuleScope,
    pub category: CategoryId,
    pub term: String,
    pub verdict: Verdict,
    pub rationale: String,
}

impl CompatibilityRule {
    fn matches(&self, candidate: &PromptCandidate) -> bool {
        if self.category != candidate.category {
            return false;
        }
        let bound = match self.scope {
            RuleScope::AttributeLabel => candidate.attribute.as_deref(),
            RuleScope::SourceLabel => candidate.source.as_deref(),
        };
        bound == Some(self.term.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleTable {
    rules: Vec<CompatibilityRule>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRules {
    #[serde(default)]
    rule: Vec<CompatibilityRule>,
}

impl RuleTable {
    pub fn new(rules: Vec<CompatibilityRule>) -> Result<Self, CurationError> {
        let mut seen = HashSet::new();
        for r in &rules {
            if !seen.insert((r.scope, r.category, r.term.as_str())) {
                return Err(CurationError::InvalidRules(format!(
                    "duplicate rule for ({:?}, {}, `{}`)",
                    r.scope, r.category, r.term
                )));
            }
        }
        Ok(Self { rules })
    }

    pub fn shipped() -> Self {
        Self::from_toml_str(SHIPPED_RULES).expect("shipped rules are valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, CurationError> {
        let raw: RawRules =
            toml::from_str(text).map_err(|e| CurationError::InvalidRules(e.to_string()))?;
        Self::new(raw.rule)
    }

    pub fn load(path: &Path) -> Result<Self, CurationError> {
        let text = std::fs::read_to_string(path).map_err(|source| CurationError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn rules(&self) -> &[CompatibilityRule] {
        &self.rules
    }
}

/// Outcome of checking one candidate against the rule table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompatibilityVerdict {
    pub verdict: Verdict,
    /// Deny rules that matched.
    pub violated: Vec<CompatibilityRule>,
    /// Allow rules that matched.
    pub supporting: Vec<CompatibilityRule>,
}

/// Deny iff any Deny rule matches the candidate's attribute or source in its category.
pub fn check_compatibility(candidate: &PromptCandidate, rules: &[CompatibilityRule]) -> CompatibilityVerdict {
    let (violated, supporting): (Vec<_>, Vec<_>) = rules
        .iter()
        .filter(|r| r.matches(candidate))
        .cloned()
        .partition(|r| r.verdict == Verdict::Deny);
    CompatibilityVerdict {
        verdict: if violated.is_empty() {
            Verdict::Allow
        } else {
            Verdict::Deny
        },
        violated,
        supporting,
    }
}
