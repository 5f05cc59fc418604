//! The prompt grammars: slotted patterns, rendering and parsing.
//!
//! A pattern is a sentence with `<attribute>`, `<label>` and `<source>` slots:
//!
//! ```text
//! ATTR      A <attribute> sound of a <label>
//! SRC       The sound of a <label> coming from a <source>
//! ATTR_SRC  A <attribute> sound of a <label> can be heard from a <source>
//! VANILLA   This is the sound of a <label>
//! ```
//!
//! Surface variation is allowed in the opener (`A`/`The`), the article in
//! front of the label (present or absent), the connector (`coming from` /
//! `can be heard from`) and the determiner in front of the source
//! (`a`/`the`/none). Articles written in front of a slot are placeholders: the
//! renderer picks `a`, `an` or nothing for the bound word.

use std::collections::HashMap;
use std::fmt;
use std::sync::{LazyLock, Mutex};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::article::{a_or_an, article_for_noun_phrase, Article};

pub const ATTRIBUTE_SLOT: &str = "<attribute>";
pub const LABEL_SLOT: &str = "<label>";
pub const SOURCE_SLOT: &str = "<source>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GrammarId {
    Attr,
    Src,
    AttrSrc,
    /// The single generic baseline template. Never produced by generation.
    Vanilla,
}

impl GrammarId {
    /// The three grammars used for task-specific prompts.
    pub const GENERATIVE: [GrammarId; 3] = [GrammarId::Attr, GrammarId::Src, GrammarId::AttrSrc];

    pub fn needs_attribute(self) -> bool {
        matches!(self, Self::Attr | Self::AttrSrc)
    }

    pub fn needs_source(self) -> bool {
        matches!(self, Self::Src | Self::AttrSrc)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Attr => "ATTR",
            Self::Src => "SRC",
            Self::AttrSrc => "ATTR_SRC",
            Self::Vanilla => "VANILLA",
        }
    }
}

impl fmt::Display for GrammarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GrammarError {
    #[error("UnboundSlot: pattern `{pattern}` needs a value for {slot}")]
    UnboundSlot { pattern: String, slot: &'static str },
    #[error("UnparseablePrompt: `{0}` does not match any prompt grammar")]
    Unparseable(String),
    #[error("InvalidLabel: label text must be non-empty and free of `<`/`>` (got `{0}`)")]
    InvalidLabel(String),
    #[error("InvalidPattern: `{pattern}`: {reason}")]
    InvalidPattern { pattern: String, reason: String },
}

/// A slotted template belonging to one grammar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub grammar_id: GrammarId,
    pub pattern: String,
}

impl PromptTemplate {
    pub fn new(pattern: &str) -> Result<Self, GrammarError> {
        let parsed = parse_pattern(pattern)?;
        Ok(Self {
            grammar_id: parsed.grammar,
            pattern: parsed.pattern,
        })
    }

    /// The canonical template for a grammar.
    pub fn canonical(grammar: GrammarId) -> Self {
        let pattern = match grammar {
            GrammarId::Attr => "A <attribute> sound of a <label>",
            GrammarId::Src => "The sound of a <label> coming from a <source>",
            GrammarId::AttrSrc => "A <attribute> sound of a <label> can be heard from a <source>",
            GrammarId::Vanilla => "This is the sound of a <label>",
        };
        Self {
            grammar_id: grammar,
            pattern: pattern.to_string(),
        }
    }

    /// Surface variants the offline generator draws from, per grammar.
    pub fn variants(grammar: GrammarId) -> Vec<Self> {
        let patterns: &[&str] = match grammar {
            GrammarId::Attr => &["A <attribute> sound of a <label>"],
            GrammarId::Src => &[
                "The sound of a <label> coming from a <source>",
                "The sound of a <label> can be heard from a <source>",
            ],
            GrammarId::AttrSrc => &[
                "A <attribute> sound of a <label> can be heard from a <source>",
                "A <attribute> sound of a <label> coming from a <source>",
            ],
            GrammarId::Vanilla => &["This is the sound of a <label>"],
        };
        patterns
            .iter()
            .map(|p| Self {
                grammar_id: grammar,
                pattern: (*p).to_string(),
            })
            .collect()
    }
}

/// Result of matching a sentence or pattern against the grammars.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedPrompt {
    pub grammar: GrammarId,
    pub attribute: Option<String>,
    pub source: Option<String>,
    /// Canonical slotted pattern with placeholder articles.
    pub pattern: String,
}

struct Parts<'t> {
    opener: &'t str,
    attribute: Option<&'t str>,
    label_article: bool,
    connector: Option<&'t str>,
    source_det: Option<&'t str>,
    source: Option<&'t str>,
}

fn structure_regex(label: &str) -> Regex {
    Regex::new(&format!(
        r"^(?P<open>This is the|An|A|The) (?:(?P<attr>.+?) )?sound of (?:(?P<lart>an|a) )?{label}(?: (?P<conn>coming from|can be heard from) (?:(?P<sdet>an|a|the) )?(?P<src>.+))?$"
    ))
    .expect("structure regex is valid")
}

static PATTERN_RE: LazyLock<Regex> = LazyLock::new(|| structure_regex(&regex::escape(LABEL_SLOT)));
static SLOT_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<([^<>]*)>").expect("valid"));

fn match_parts<'t>(re: &Regex, text: &'t str) -> Option<Parts<'t>> {
    let caps = re.captures(text)?;
    let get = |name| caps.name(name).map(|m| m.as_str());
    Some(Parts {
        opener: get("open")?,
        attribute: get("attr"),
        label_article: caps.name("lart").is_some(),
        connector: get("conn"),
        source_det: get("sdet"),
        source: get("src"),
    })
}

fn assemble(parts: &Parts<'_>, original: &str) -> Result<(GrammarId, String), GrammarError> {
    let grammar = match (parts.opener, parts.attribute.is_some(), parts.source.is_some()) {
        ("This is the", false, false) => GrammarId::Vanilla,
        ("This is the", _, _) => return Err(GrammarError::Unparseable(original.to_string())),
        (_, true, false) => GrammarId::Attr,
        (_, false, true) => GrammarId::Src,
        (_, true, true) => GrammarId::AttrSrc,
        (_, false, false) => return Err(GrammarError::Unparseable(original.to_string())),
    };
    let opener = match parts.opener {
        "A" | "An" => "A",
        other => other,
    };
    let mut pattern = String::from(opener);
    if parts.attribute.is_some() {
        pattern.push(' ');
        pattern.push_str(ATTRIBUTE_SLOT);
    }
    pattern.push_str(" sound of ");
    if parts.label_article {
        pattern.push_str("a ");
    }
    pattern.push_str(LABEL_SLOT);
    if let Some(conn) = parts.connector {
        pattern.push(' ');
        pattern.push_str(conn);
        pattern.push(' ');
        match parts.source_det {
            Some("a" | "an") => pattern.push_str("a "),
            Some(det) => {
                pattern.push_str(det);
                pattern.push(' ');
            }
            None => {}
        }
        pattern.push_str(SOURCE_SLOT);
    }
    Ok((grammar, pattern))
}

/// Parses a slotted pattern such as `"A <attribute> sound of a <label>"`.
pub fn parse_pattern(pattern: &str) -> Result<ParsedPrompt, GrammarError> {
    let invalid = |reason: &str| GrammarError::InvalidPattern {
        pattern: pattern.to_string(),
        reason: reason.to_string(),
    };
    for cap in SLOT_RE.captures_iter(pattern) {
        match &cap[1] {
            "attribute" | "label" | "source" => {}
            other => return Err(invalid(&format!("unknown slot <{other}>"))),
        }
    }
    if pattern.matches(LABEL_SLOT).count() != 1 {
        return Err(invalid("the <label> slot must appear exactly once"));
    }
    let parts = match_parts(&PATTERN_RE, pattern)
        .ok_or_else(|| GrammarError::Unparseable(pattern.to_string()))?;
    if parts.attribute.is_some_and(|a| a != ATTRIBUTE_SLOT)
        || parts.source.is_some_and(|s| s != SOURCE_SLOT)
    {
        return Err(invalid("attribute and source positions must hold their slots"));
    }
    let (grammar, canonical) = assemble(&parts, pattern)?;
    Ok(ParsedPrompt {
        grammar,
        attribute: None,
        source: None,
        pattern: canonical,
    })
}

/// Strips list numbering, bullets, quotes, trailing punctuation and angle
/// brackets around terms other than `<label>` from one line of model output.
pub fn clean_generated_line(line: &str) -> String {
    static NUMBERING: LazyLock<Regex> =
        LazyLock::new(|| Regex::new(r"^\s*(?:\d+\s*[.):]|[-*\u{2022}])\s*").expect("valid"));
    let mut s = NUMBERING.replace(line.trim(), "").into_owned();
    s = s
        .trim()
        .trim_matches(|c| matches!(c, '"' | '\'' | '`' | '\u{201c}' | '\u{201d}'))
        .trim()
        .trim_end_matches(['.', '!', ';', ','])
        .to_string();
    let unwrapped = SLOT_RE.replace_all(&s, |caps: &regex::Captures<'_>| {
        let inner = caps[1].trim();
        if inner.eq_ignore_ascii_case("label") {
            LABEL_SLOT.to_string()
        } else {
            inner.to_string()
        }
    });
    unwrapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses a generated prompt in which attribute and source are literal words
/// and the label is the `<label>` slot.
pub fn parse_generated_line(line: &str) -> Result<ParsedPrompt, GrammarError> {
    let cleaned = clean_generated_line(line);
    if cleaned.matches(LABEL_SLOT).count() != 1 {
        return Err(GrammarError::Unparseable(line.to_string()));
    }
    let parts =
        match_parts(&PATTERN_RE, &cleaned).ok_or_else(|| GrammarError::Unparseable(line.to_string()))?;
    let (grammar, pattern) = assemble(&parts, line)?;
    Ok(ParsedPrompt {
        grammar,
        attribute: parts.attribute.map(|a| a.to_lowercase()),
        source: parts.source.map(|s| s.to_lowercase()),
        pattern,
    })
}

static RENDERED_RE: LazyLock<Mutex<HashMap<String, Regex>>> = LazyLock::new(Default::default);
const RENDERED_RE_CAP: usize = 1024;

fn rendered_regex(label_text: &str) -> Regex {
    let mut cache = RENDERED_RE.lock().unwrap_or_else(|p| p.into_inner());
    if let Some(re) = cache.get(label_text) {
        return re.clone();
    }
    if cache.len() >= RENDERED_RE_CAP {
        cache.clear();
    }
    let label_re = format!("(?:{}|{})", regex::escape(label_text), regex::escape(&capitalize(label_text)));
    let re = structure_regex(&label_re);
    cache.insert(label_text.to_string(), re.clone());
    re
}

/// Parses a fully rendered prompt, given the label text that was substituted.
pub fn parse_rendered(text: &str, label_text: &str) -> Result<ParsedPrompt, GrammarError> {
    let re = rendered_regex(label_text);
    let parts = match_parts(&re, text).ok_or_else(|| GrammarError::Unparseable(text.to_string()))?;
    let (grammar, pattern) = assemble(&parts, text)?;
    Ok(ParsedPrompt {
        grammar,
        attribute: parts.attribute.map(str::to_string),
        source: parts.source.map(str::to_string),
        pattern,
    })
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Splits `text` into everything before a trailing standalone article and the article.
fn split_trailing_article(text: &str) -> Option<(&str, &str)> {
    let trimmed = text.strip_suffix(' ')?;
    let start = trimmed.rfind(' ').map_or(0, |i| i + 1);
    let word = &trimmed[start..];
    matches!(word, "a" | "A" | "an" | "An").then_some((&text[..start], word))
}

/// Substitutes every slot of `pattern` and fixes the indefinite articles in
/// front of them.
pub fn render(
    pattern: &str,
    attribute: Option<&str>,
    label: &str,
    source: Option<&str>,
) -> Result<String, GrammarError> {
    let label = label.trim();
    if label.is_empty() || label.contains(['<', '>']) {
        return Err(GrammarError::InvalidLabel(label.to_string()));
    }
    substitute(pattern, attribute, Some(label), source)
}

/// Binds attribute and source but leaves the `<label>` slot (and the article
/// in front of it) untouched.
pub fn bind_pattern(
    pattern: &str,
    attribute: Option<&str>,
    source: Option<&str>,
) -> Result<String, GrammarError> {
    substitute(pattern, attribute, None, source)
}

fn substitute(
    pattern: &str,
    attribute: Option<&str>,
    label: Option<&str>,
    source: Option<&str>,
) -> Result<String, GrammarError> {
    let mut out = String::with_capacity(pattern.len() + 32);
    let mut last = 0;
    for caps in SLOT_RE.captures_iter(pattern) {
        let whole = caps.get(0).expect("match");
        out.push_str(&pattern[last..whole.start()]);
        last = whole.end();

        let (slot, value) = match &caps[1] {
            "attribute" => (ATTRIBUTE_SLOT, attribute),
            "label" if label.is_none() => {
                out.push_str(LABEL_SLOT);
                continue;
            }
            "label" => (LABEL_SLOT, label),
            "source" => (SOURCE_SLOT, source),
            other => {
                return Err(GrammarError::InvalidPattern {
                    pattern: pattern.to_string(),
                    reason: format!("unknown slot <{other}>"),
                })
            }
        };
        let value = value
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| GrammarError::UnboundSlot {
                pattern: pattern.to_string(),
                slot,
            })?;
        if value.contains(['<', '>']) {
            return Err(GrammarError::InvalidPattern {
                pattern: pattern.to_string(),
                reason: format!("binding `{value}` for {slot} contains slot markers"),
            });
        }

        let mut value = value.to_string();
        if let Some((prefix, written)) = split_trailing_article(&out) {
            let wanted = if slot == ATTRIBUTE_SLOT {
                a_or_an(&value)
            } else {
                article_for_noun_phrase(&value)
            };
            let capital = written.starts_with('A');
            let prefix = prefix.to_string();
            out = prefix;
            match wanted {
                Article::A => out.push_str(if capital { "A " } else { "a " }),
                Article::An => out.push_str(if capital { "An " } else { "an " }),
                Article::Omit => {
                    if capital && out.is_empty() {
                        value = capitalize(&value);
                    }
                }
            }
        }
        out.push_str(&value);
    }
    out.push_str(&pattern[last..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_templates_parse_to_their_grammar() {
        for g in [GrammarId::Attr, GrammarId::Src, GrammarId::AttrSrc, GrammarId::Vanilla] {
            for t in PromptTemplate::variants(g) {
                let p = parse_pattern(&t.pattern).unwrap();
                assert_eq!(p.grammar, g);
                assert_eq!(p.pattern, t.pattern);
            }
            assert_eq!(parse_pattern(&PromptTemplate::canonical(g).pattern).unwrap().grammar, g);
        }
    }

    #[test]
    fn slot_sets_per_grammar() {
        let slots = |p: &str| {
            SLOT_RE
                .captures_iter(p)
                .map(|c| c[1].to_string())
                .collect::<Vec<_>>()
        };
        assert_eq!(slots(&PromptTemplate::canonical(GrammarId::Attr).pattern), ["attribute", "label"]);
        assert_eq!(slots(&PromptTemplate::canonical(GrammarId::Src).pattern), ["label", "source"]);
        assert_eq!(
            slots(&PromptTemplate::canonical(GrammarId::AttrSrc).pattern),
            ["attribute", "label", "source"]
        );
    }

    #[test]
    fn bad_patterns() {
        assert!(matches!(
            parse_pattern("A <attribute> sound of a <thing>"),
            Err(GrammarError::InvalidPattern { .. })
        ));
        assert!(matches!(
            parse_pattern("A sound of a <label>"),
            Err(GrammarError::Unparseable(_))
        ));
        assert!(parse_pattern("A <attribute> sound of a <label> and <label>").is_err());
        assert!(parse_pattern("A loud sound of a <label>").is_err());
    }

    #[test]
    fn render_adjusts_articles() {
        let r = |p, a, l, s| render(p, a, l, s).unwrap();
        assert_eq!(
            r("A <attribute> sound of a <label>", Some("eerie"), "owl", None),
            "An eerie sound of an owl"
        );
        assert_eq!(
            r("The sound of a <label> coming from a <source>", None, "organ", Some("church")),
            "The sound of an organ coming from a church"
        );
        assert_eq!(
            r("The sound of a <label> coming from a <source>", None, "jazz", Some("concert hall")),
            "The sound of jazz coming from a concert hall"
        );
        assert_eq!(
            r("The sound of a <label> coming from the <source>", None, "organ", Some("opera")),
            "The sound of an organ coming from the opera"
        );
    }

    #[test]
    fn unbound_slot() {
        let err = render("A <attribute> sound of a <label>", None, "dog", None).unwrap_err();
        assert!(matches!(err, GrammarError::UnboundSlot { slot: ATTRIBUTE_SLOT, .. }));
        let err = render("The sound of a <label> coming from a <source>", None, "dog", Some(" "))
            .unwrap_err();
        assert!(matches!(err, GrammarError::UnboundSlot { slot: SOURCE_SLOT, .. }));
        assert!(matches!(
            render("A <attribute> sound of a <label>", Some("loud"), "", None),
            Err(GrammarError::InvalidLabel(_))
        ));
    }

    #[test]
    fn generated_lines_are_cleaned() {
        let p = parse_generated_line("3. \"A <loud> sound of a <label> coming from a <street>.\"").unwrap();
        assert_eq!(p.grammar, GrammarId::AttrSrc);
        assert_eq!(p.attribute.as_deref(), Some("loud"));
        assert_eq!(p.source.as_deref(), Some("street"));
        assert_eq!(p.pattern, "A <attribute> sound of a <label> coming from a <source>");

        let p = parse_generated_line("- An eerie sound of an <label>").unwrap();
        assert_eq!(p.grammar, GrammarId::Attr);
        assert_eq!(p.attribute.as_deref(), Some("eerie"));
        assert_eq!(p.pattern, "A <attribute> sound of a <label>");

        assert!(parse_generated_line("Here are your prompts:").is_err());
        assert!(parse_generated_line("A loud sound of a dog").is_err());
    }

    #[test]
    fn rendered_round_trip() {
        let text = "A hushed sound of a cough can be heard from the hall";
        let p = parse_rendered(text, "cough").unwrap();
        assert_eq!(p.grammar, GrammarId::AttrSrc);
        assert_eq!(p.attribute.as_deref(), Some("hushed"));
        assert_eq!(p.source.as_deref(), Some("hall"));
    }
}
