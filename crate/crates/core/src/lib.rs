//! Task-specific prompt ensembles for zero-shot audio classification.
//!
//! The pipeline: group dataset labels into task categories ([`taxonomy`]),
//! generate candidate prompts from attribute/source pools ([`promptgen`]),
//! filter them down to a curated set ([`curation`]), embed the rendered
//! prompts and average them per class ([`encoder`], [`ensemble`]), and
//! evaluate against the single generic prompt ([`eval`]).

pub mod curation;
pub mod encoder;
pub mod ensemble;
pub mod eval;
pub mod promptgen;
pub mod shipped;
pub mod taxonomy;
