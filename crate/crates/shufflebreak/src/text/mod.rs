//! Deterministic, seeded text perturbation.
//!
//! The attack's default operation is the word-wise shuffle; the other
//! granularities (trigram blocks, within-block, nouns/adjectives only,
//! subword tokens) and the auxiliary mutation operators exist for
//! comparison runs.

mod bpe;
mod lexicon;
mod mutate;
mod pos;
mod shuffle;

pub use bpe::{BpeTokenizer, SubwordTokenizer};
pub use lexicon::SynonymLexicon;
pub use mutate::{apply_text_mutation, TextMutationKind, PUNCTUATION_MARKS};
pub use pos::{LexiconTagger, PosTag, PosTagger};
pub use shuffle::{
    shuffle_pos_nouns_adj, shuffle_text, shuffle_token_wise, shuffle_trigrams, shuffle_whole_words,
    shuffle_within_trigrams, TextTools,
};

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("prompt is empty after trimming whitespace")]
    EmptyPrompt,
    #[error("mutation would leave the sequence empty")]
    DegenerateResult,
    #[error("mutation rate {0} is outside (0, 1]")]
    InvalidRate(f64),
    #[error("part-of-speech tagger failed: {0}")]
    TaggerFailure(String),
    #[error("subword tokenizer failed: {0}")]
    TokenizerFailure(String),
    #[error("{path}:{line}: {msg}")]
    LexiconFormat {
        path: String,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A unicode prompt destined for a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TextPrompt(String);

impl TextPrompt {
    pub fn new(content: impl Into<String>) -> Self {
        Self(content.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// True when nothing but whitespace remains, i.e. unusable as attack input.
    pub fn is_blank(&self) -> bool {
        self.0.trim().is_empty()
    }
}

impl fmt::Display for TextPrompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TextPrompt {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

impl From<String> for TextPrompt {
    fn from(s: String) -> Self {
        Self(s)
    }
}

/// An ordered list of words, the unit sequence of the word-level shuffles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordSequence {
    words: Vec<String>,
}

impl WordSequence {
    pub fn new(words: Vec<String>) -> Self {
        Self { words }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Splits a prompt into maximal runs of non-whitespace characters.
///
/// Punctuation stays attached to its word and consecutive whitespace
/// collapses, so `tokenize_words(detokenize(seq)) == seq` for any sequence.
pub fn tokenize_words(prompt: &TextPrompt) -> Result<WordSequence, TextError> {
    if prompt.is_blank() {
        return Err(TextError::EmptyPrompt);
    }
    Ok(WordSequence::new(
        prompt.as_str().split_whitespace().map(str::to_string).collect(),
    ))
}

/// Joins words back into a prompt with single spaces.
pub fn detokenize(seq: &WordSequence) -> TextPrompt {
    TextPrompt::new(seq.words().join(" "))
}

/// The text shuffle granularities understood by the attack engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TextShuffleKind {
    /// Leave the text untouched.
    None,
    /// Shuffle every word independently (the default attack operation).
    #[default]
    WordWise,
    /// Shuffle consecutive three-word blocks, keeping each block intact.
    Trigram,
    /// Keep block order, shuffle words inside each three-word block.
    WithinTrigram,
    /// Shuffle only positions tagged noun or adjective.
    PosNounsAdj,
    /// Shuffle subword tokens produced by a byte-pair tokenizer.
    TokenWise,
}

impl TextShuffleKind {
    pub const ALL: [TextShuffleKind; 6] = [
        TextShuffleKind::None,
        TextShuffleKind::WordWise,
        TextShuffleKind::Trigram,
        TextShuffleKind::WithinTrigram,
        TextShuffleKind::PosNounsAdj,
        TextShuffleKind::TokenWise,
    ];
}

impl fmt::Display for TextShuffleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            TextShuffleKind::None => "none",
            TextShuffleKind::WordWise => "word-wise",
            TextShuffleKind::Trigram => "trigram",
            TextShuffleKind::WithinTrigram => "within-trigram",
            TextShuffleKind::PosNounsAdj => "pos-nouns-adj",
            TextShuffleKind::TokenWise => "token-wise",
        };
        f.write_str(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenize_splits_on_whitespace() {
        let seq = tokenize_words(&"how to make a bomb".into()).unwrap();
        assert_eq!(seq.words(), ["how", "to", "make", "a", "bomb"]);
        assert_eq!(seq.len(), 5);
    }

    #[test]
    fn tokenize_single_word() {
        let seq = tokenize_words(&"hello".into()).unwrap();
        assert_eq!(seq.words(), ["hello"]);
    }

    #[test]
    fn tokenize_collapses_whitespace() {
        let seq = tokenize_words(&"  a  b ".into()).unwrap();
        assert_eq!(seq.words(), ["a", "b"]);
    }

    #[test]
    fn tokenize_rejects_blank_input() {
        assert!(matches!(
            tokenize_words(&"   \t\n".into()),
            Err(TextError::EmptyPrompt)
        ));
    }

    #[test]
    fn detokenize_joins_with_single_spaces() {
        let seq = WordSequence::new(
            ["bomb", "make", "how", "a", "to"].map(str::to_string).to_vec(),
        );
        assert_eq!(detokenize(&seq).as_str(), "bomb make how a to");
        let single = WordSequence::new(vec!["hello".to_string()]);
        assert_eq!(detokenize(&single).as_str(), "hello");
    }

    proptest! {
        #[test]
        fn tokenize_detokenize_round_trips(
            words in proptest::collection::vec("[a-zA-Z0-9,.!?']{1,12}", 1..40)
        ) {
            let seq = WordSequence::new(words);
            let round = tokenize_words(&detokenize(&seq)).unwrap();
            prop_assert_eq!(round, seq);
        }
    }
}
