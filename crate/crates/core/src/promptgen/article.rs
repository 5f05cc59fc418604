//! Indefinite article selection for rendered prompts.

/// What goes in front of a noun phrase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Article {
    A,
    An,
    /// Mass nouns, plurals and gerunds take no indefinite article.
    Omit,
}

// Vowel-initial words pronounced with a consonant sound, and the reverse.
const A_OVERRIDES: &[&str] = &[
    "eucalyptus", "eulogy", "euphonium", "european", "ewe", "once", "one", "ukulele", "unicorn",
    "uniform", "union", "unique", "unit", "university", "usb", "user", "useful", "usual",
    "utensil", "utility",
];
const AN_OVERRIDES: &[&str] = &["heir", "honest", "honor", "honour", "hour", "hourly", "mp3"];

// Phrases or head words that read as uncountable in "the sound of ___".
const MASS_NOUNS: &[&str] = &[
    "applause", "blues", "brass", "chatter", "classical", "country", "disco", "electronica",
    "folk", "funk", "gospel", "gunfire", "hip hop", "hiphop", "jazz", "laughter", "machinery",
    "metal", "music", "noise", "pop", "rain", "reggae", "rock", "silence", "snow", "soul",
    "speech", "static", "techno", "thunder", "traffic", "water", "wind",
];

// Words that look like gerunds or plurals but are countable nouns.
const COUNTABLE_OVERRIDES: &[&str] = &[
    "building", "ceiling", "evening", "king", "ring", "sling", "spring", "string", "swing",
    "thing", "wedding", "wing", "bus", "chorus", "canvas", "gas", "lens", "atlas", "iris",
];

// Letters whose spoken name starts with a vowel sound.
const AN_LETTERS: &str = "aefhilmnorsx";

fn in_table(table: &[&str], word: &str) -> bool {
    table.contains(&word)
}

/// "a" or "an" for a word, by its first letter with the override tables applied.
pub fn a_or_an(word: &str) -> Article {
    let lower = word.to_lowercase();
    let first_word = lower.split_whitespace().next().unwrap_or("");
    let bare: String = first_word
        .chars()
        .filter(|c| c.is_alphanumeric())
        .collect();
    if in_table(A_OVERRIDES, &bare) {
        return Article::A;
    }
    if in_table(AN_OVERRIDES, &bare) {
        return Article::An;
    }
    if bare.chars().count() == 1 {
        let c = bare.chars().next().unwrap();
        return if AN_LETTERS.contains(c) { Article::An } else { Article::A };
    }
    match bare.chars().next() {
        Some('a' | 'e' | 'i' | 'o' | 'u') => Article::An,
        _ => Article::A,
    }
}

fn looks_plural(head: &str) -> bool {
    head.len() > 3
        && head.ends_with('s')
        && !head.ends_with("ss")
        && !head.ends_with("us")
        && !head.ends_with("is")
}

fn looks_gerund(head: &str) -> bool {
    head.len() > 4 && head.ends_with("ing")
}

/// Article for a noun phrase in a label or source slot.
pub fn article_for_noun_phrase(phrase: &str) -> Article {
    let lower = phrase.trim().to_lowercase();
    if in_table(MASS_NOUNS, &lower) {
        return Article::Omit;
    }
    let head = lower.split_whitespace().last().unwrap_or("");
    if !in_table(COUNTABLE_OVERRIDES, head)
        && (in_table(MASS_NOUNS, head) || looks_plural(head) || looks_gerund(head))
    {
        return Article::Omit;
    }
    a_or_an(&lower)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vowel_heuristic() {
        assert_eq!(a_or_an("organ"), Article::An);
        assert_eq!(a_or_an("opera"), Article::An);
        assert_eq!(a_or_an("violin"), Article::A);
        assert_eq!(a_or_an("explosion"), Article::An);
    }

    #[test]
    fn override_tables() {
        assert_eq!(a_or_an("university"), Article::A);
        assert_eq!(a_or_an("hour"), Article::An);
        assert_eq!(a_or_an("e"), Article::An);
        assert_eq!(a_or_an("b"), Article::A);
    }

    #[test]
    fn noun_phrases() {
        assert_eq!(article_for_noun_phrase("jazz"), Article::Omit);
        assert_eq!(article_for_noun_phrase("rock"), Article::Omit);
        assert_eq!(article_for_noun_phrase("hip hop"), Article::Omit);
        assert_eq!(article_for_noun_phrase("laughter"), Article::Omit);
        assert_eq!(article_for_noun_phrase("street music"), Article::Omit);
        assert_eq!(article_for_noun_phrase("church bells"), Article::Omit);
        assert_eq!(article_for_noun_phrase("glass breaking"), Article::Omit);
        assert_eq!(article_for_noun_phrase("crying baby"), Article::A);
        assert_eq!(article_for_noun_phrase("string"), Article::A);
        assert_eq!(article_for_noun_phrase("bus"), Article::A);
        assert_eq!(article_for_noun_phrase("bass"), Article::A);
        assert_eq!(article_for_noun_phrase("air conditioner"), Article::An);
        assert_eq!(article_for_noun_phrase("gunshot"), Article::A);
        assert_eq!(article_for_noun_phrase("concert hall"), Article::A);
    }
}
