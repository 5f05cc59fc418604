//! Review of surviving candidates, one at a time.

use std::fmt;
use std::io::{BufRead, Write};

use serde::Serialize;

use super::rules::{CompatibilityVerdict, Verdict};
use super::{CurationError, CurationMode};
use crate::promptgen::PromptCandidate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReviewDecision {
    Accept,
    Reject,
    Quit,
}

impl fmt::Display for ReviewDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Accept => "accept",
            Self::Reject => "reject",
            Self::Quit => "quit",
        })
    }
}

pub struct ReviewItem<'a> {
    pub index: usize,
    pub total: usize,
    pub accepted: usize,
    pub target: usize,
    pub candidate: &'a PromptCandidate,
    pub preview: Option<&'a str>,
    pub verdict: &'a CompatibilityVerdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TranscriptEntry {
    pub index: usize,
    pub line: String,
    pub decision: ReviewDecision,
}

impl fmt::Display for TranscriptEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}", self.index + 1, self.decision, self.line)
    }
}

pub trait Reviewer {
    fn name(&self) -> String;
    fn mode(&self) -> CurationMode;
    fn review(&mut self, item: &ReviewItem<'_>) -> Result<ReviewDecision, CurationError>;
}

/// Accepts every survivor.
#[derive(Debug, Clone)]
pub struct AutoReviewer {
    pub name: String,
}

impl Default for AutoReviewer {
    fn default() -> Self {
        Self { name: "auto".into() }
    }
}

impl Reviewer for AutoReviewer {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn mode(&self) -> CurationMode {
        CurationMode::Auto
    }

    fn review(&mut self, _: &ReviewItem<'_>) -> Result<ReviewDecision, CurationError> {
        Ok(ReviewDecision::Accept)
    }
}

/// Line-oriented y/n/q review over any reader/writer pair (stdin/stderr in the CLI).
pub struct TerminalReviewer<R, W> {
    name: String,
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> TerminalReviewer<R, W> {
    pub fn new(name: impl Into<String>, input: R, output: W) -> Self {
        Self {
            name: name.into(),
            input,
            output,
        }
    }
}

impl<R: BufRead, W: Write> Reviewer for TerminalReviewer<R, W> {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn mode(&self) -> CurationMode {
        CurationMode::Interactive
    }

    fn review(&mut self, item: &ReviewItem<'_>) -> Result<ReviewDecision, CurationError> {
        let out = &mut self.output;
        writeln!(
            out,
            "--- candidate {}/{} (accepted {}/{}) ---",
            item.index + 1,
            item.total,
            item.accepted,
            item.target
        )?;
        writeln!(out, "  grammar: {}", item.candidate.grammar_id)?;
        writeln!(out, "  prompt:  {}", item.candidate.bound_line())?;
        if let Some(p) = item.preview {
            writeln!(out, "  example: {p}")?;
        }
        let verdict = match item.verdict.verdict {
            Verdict::Allow => "allow",
            Verdict::Deny => "deny",
        };
        writeln!(out, "  rules:   {verdict}")?;
        for r in &item.verdict.supporting {
            writeln!(out, "           + {} ({})", r.term, r.rationale)?;
        }
        loop {
            write!(out, "  accept? [y]es / [n]o / [q]uit > ")?;
            out.flush()?;
            let mut line = String::new();
            if self.input.read_line(&mut line)? == 0 {
                writeln!(out)?;
                return Ok(ReviewDecision::Quit);
            }
            match line.trim().to_lowercase().as_str() {
                "y" | "yes" => return Ok(ReviewDecision::Accept),
                "n" | "no" => return Ok(ReviewDecision::Reject),
                "q" | "quit" => return Ok(ReviewDecision::Quit),
                other => writeln!(out, "  unrecognized answer `{other}`")?,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{curate, CurationError};
    use super::*;
    use crate::promptgen::{PoolSet, Provenance};
    use crate::taxonomy::CategoryId;

    fn pool_candidates(n: usize) -> Vec<PromptCandidate> {
        let pools = PoolSet::shipped();
        let p = pools.for_category(CategoryId::NonVerbalVocal).unwrap();
        p.attributes
            .attributes
            .iter()
            .take(n)
            .map(|a| {
                PromptCandidate::new(
                    CategoryId::NonVerbalVocal,
                    "A <attribute> sound of a <label>",
                    Some(a.clone()),
                    None,
                    Provenance::Offline,
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn interactive_accepts_until_k() {
        let cands = pool_candidates(6);
        let input = b"n\ny\nmaybe\ny\ny\n".as_slice();
        let mut output = Vec::new();
        let mut reviewer = TerminalReviewer::new("alice", input, &mut output);
        let outcome = curate(CategoryId::NonVerbalVocal, &cands, &[], 3, &mut reviewer, Some("cough")).unwrap();
        assert_eq!(outcome.set.prompts, vec![cands[1].clone(), cands[2].clone(), cands[3].clone()]);
        assert_eq!(outcome.set.reviewer, "alice");
        assert_eq!(outcome.set.mode, CurationMode::Interactive);
        let decisions: Vec<_> = outcome.transcript.iter().map(|t| t.decision).collect();
        assert_eq!(
            decisions,
            [ReviewDecision::Reject, ReviewDecision::Accept, ReviewDecision::Accept, ReviewDecision::Accept]
        );
        let shown = String::from_utf8(output).unwrap();
        assert!(shown.contains("A hushed sound of a cough"), "{shown}");
        assert!(shown.contains("unrecognized answer `maybe`"));
    }

    #[test]
    fn quit_and_eof_abort() {
        let cands = pool_candidates(6);
        let mut reviewer = TerminalReviewer::new("bob", b"y\nq\n".as_slice(), Vec::new());
        let err = curate(CategoryId::NonVerbalVocal, &cands, &[], 3, &mut reviewer, None).unwrap_err();
        assert!(matches!(err, CurationError::ReviewAborted { accepted: 1, k: 3 }));

        let mut reviewer = TerminalReviewer::new("bob", b"y\n".as_slice(), Vec::new());
        let err = curate(CategoryId::NonVerbalVocal, &cands, &[], 3, &mut reviewer, None).unwrap_err();
        assert!(matches!(err, CurationError::ReviewAborted { .. }));
    }

    #[test]
    fn rejecting_too_many_runs_out() {
        let cands = pool_candidates(3);
        let mut reviewer = TerminalReviewer::new("carol", b"n\ny\ny\n".as_slice(), Vec::new());
        let err = curate(CategoryId::NonVerbalVocal, &cands, &[], 3, &mut reviewer, None).unwrap_err();
        assert!(matches!(err, CurationError::InsufficientCandidates { available: 2, k: 3 }));
    }
}
