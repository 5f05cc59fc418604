//! Candidate lists and curated prompt sets bundled with the crate.
//!
//! Candidates come from the offline generator with seed [`SHIPPED_SEED`] over
//! the shipped pools (40 per category); each prompt set is the auto-curated
//! K=20 prefix of its candidates under the shipped rules. Both can be rebuilt
//! with `tspe gen prompts` and `tspe curate --mode auto`.

use crate::curation::PromptSet;
use crate::promptgen::{read_candidates, PromptCandidate};
use crate::taxonomy::CategoryId;

pub const SHIPPED_SEED: u64 = 0;

pub fn candidates_jsonl(category: CategoryId) -> &'static str {
    match category {
        CategoryId::MusicalInstruments => include_str!("../data/candidates/musical_instruments.jsonl"),
        CategoryId::AcousticScene => include_str!("../data/candidates/acoustic_scene.jsonl"),
        CategoryId::MusicGenre => include_str!("../data/candidates/music_genre.jsonl"),
        CategoryId::ImpactEmergency => include_str!("../data/candidates/impact_emergency.jsonl"),
        CategoryId::NonVerbalVocal => include_str!("../data/candidates/non_verbal_vocal.jsonl"),
    }
}

pub fn promptset_json(category: CategoryId) -> &'static str {
    match category {
        CategoryId::MusicalInstruments => include_str!("../data/promptsets/musical_instruments.json"),
        CategoryId::AcousticScene => include_str!("../data/promptsets/acoustic_scene.json"),
        CategoryId::MusicGenre => include_str!("../data/promptsets/music_genre.json"),
        CategoryId::ImpactEmergency => include_str!("../data/promptsets/impact_emergency.json"),
        CategoryId::NonVerbalVocal => include_str!("../data/promptsets/non_verbal_vocal.json"),
    }
}

pub fn candidates(category: CategoryId) -> Vec<PromptCandidate> {
    read_candidates(candidates_jsonl(category).as_bytes()).expect("shipped candidates are valid")
}

pub fn promptset(category: CategoryId) -> PromptSet {
    PromptSet::from_json_str(promptset_json(category)).expect("shipped prompt sets are valid")
}
