//! Coarse part-of-speech tagging for the nouns/adjectives shuffle.
//!
//! The bundled tagger is a lexicon lookup with suffix heuristics as a
//! fallback. It is an approximation: swap in a real tagger through the
//! `PosTagger` trait when tagging quality matters.

use super::{TextError, WordSequence};
use std::collections::HashMap;
use std::path::Path;

/// Coarse tag classes; only `Noun` and `Adjective` take part in shuffling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosTag {
    Noun,
    Adjective,
    Verb,
    Other,
}

pub trait PosTagger: Send + Sync {
    /// Assigns one coarse tag per word.
    fn tag(&self, words: &WordSequence) -> Result<Vec<PosTag>, TextError>;
}

/// Lexicon-backed tagger with suffix-rule fallback; every word gets a tag.
#[derive(Debug)]
pub struct LexiconTagger {
    entries: HashMap<String, PosTag>,
}

const BUILTIN_POS_LEXICON: &str = include_str!("../../assets/pos_lexicon.tsv");

const NOUN_SUFFIXES: [&str; 8] = [
    "tion", "ment", "ness", "ship", "ance", "ence", "ism", "ity",
];
const ADJ_SUFFIXES: [&str; 8] = ["ous", "ful", "ive", "able", "ible", "less", "ish", "ary"];
const VERB_SUFFIXES: [&str; 3] = ["ize", "ify", "ate"];

impl LexiconTagger {
    pub fn new(entries: HashMap<String, PosTag>) -> Self {
        Self { entries }
    }

    /// The lexicon shipped with the harness.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_POS_LEXICON, "<builtin>").expect("bundled lexicon is well-formed")
    }

    /// Loads a tab-separated `word<TAB>tag` file, one entry per line.
    /// Accepted tags: `noun`/`n`, `adj`/`a`, `verb`/`v`, `other`/`o`.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, TextError> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path)?;
        Self::parse(&content, &path.display().to_string())
    }

    fn parse(content: &str, origin: &str) -> Result<Self, TextError> {
        let mut entries = HashMap::new();
        for (idx, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let (Some(word), Some(tag)) = (fields.next(), fields.next()) else {
                return Err(TextError::LexiconFormat {
                    path: origin.to_string(),
                    line: idx + 1,
                    msg: "expected `word<TAB>tag`".to_string(),
                });
            };
            let tag = match tag.trim().to_ascii_lowercase().as_str() {
                "noun" | "n" => PosTag::Noun,
                "adj" | "adjective" | "a" => PosTag::Adjective,
                "verb" | "v" => PosTag::Verb,
                "other" | "o" => PosTag::Other,
                other => {
                    return Err(TextError::LexiconFormat {
                        path: origin.to_string(),
                        line: idx + 1,
                        msg: format!("unknown tag `{other}`"),
                    })
                }
            };
            entries.insert(word.trim().to_ascii_lowercase(), tag);
        }
        Ok(Self { entries })
    }

    fn tag_word(&self, word: &str) -> PosTag {
        let key: String = word
            .trim_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase();
        if let Some(&tag) = self.entries.get(&key) {
            return tag;
        }
        if NOUN_SUFFIXES.iter().any(|s| key.ends_with(s)) {
            return PosTag::Noun;
        }
        if ADJ_SUFFIXES.iter().any(|s| key.ends_with(s)) {
            return PosTag::Adjective;
        }
        if VERB_SUFFIXES.iter().any(|s| key.ends_with(s)) {
            return PosTag::Verb;
        }
        PosTag::Other
    }
}

impl PosTagger for LexiconTagger {
    fn tag(&self, words: &WordSequence) -> Result<Vec<PosTag>, TextError> {
        Ok(words.words().iter().map(|w| self.tag_word(w)).collect())
    }
}
