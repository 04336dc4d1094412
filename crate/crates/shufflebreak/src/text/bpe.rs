//! Byte-pair subword tokenization for the token-wise shuffle.
//!
//! The bundled vocabulary is a small demonstration set trained over the
//! harness's demo word list; every demo word encodes to one piece and unknown
//! words fall back to genuine subword splits. Production users load their
//! target model's merges/vocab pair instead.

use super::TextError;
use std::collections::{HashMap, HashSet};
use std::path::Path;

/// End-of-word marker, kept as its own symbol until a merge fuses it.
pub const END_OF_WORD: &str = "</w>";

pub trait SubwordTokenizer: Send + Sync {
    /// Splits text into subword pieces. Pieces ending in `</w>` close a word.
    fn encode(&self, text: &str) -> Result<Vec<String>, TextError>;
    /// Reassembles pieces into text; inverse of `encode` up to whitespace
    /// normalization for any input.
    fn decode(&self, pieces: &[String]) -> Result<String, TextError>;
}

/// Greedy lowest-rank byte-pair encoder.
#[derive(Debug)]
pub struct BpeTokenizer {
    ranks: HashMap<(String, String), usize>,
    vocab: HashSet<String>,
}

const BUILTIN_MERGES: &str = include_str!("../../assets/bpe_merges.txt");
const BUILTIN_VOCAB: &str = include_str!("../../assets/bpe_vocab.txt");

impl BpeTokenizer {
    /// The bundled demonstration vocabulary.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_MERGES, BUILTIN_VOCAB, "<builtin>")
            .expect("bundled merges are well-formed")
    }

    /// Loads a merges file (`left right` per line, rank = line order) and a
    /// vocab file (one piece per line, optional tab-separated count).
    pub fn from_files(
        merges_path: impl AsRef<Path>,
        vocab_path: impl AsRef<Path>,
    ) -> Result<Self, TextError> {
        let merges_path = merges_path.as_ref();
        let merges = std::fs::read_to_string(merges_path)?;
        let vocab = std::fs::read_to_string(vocab_path.as_ref())?;
        Self::parse(&merges, &vocab, &merges_path.display().to_string())
    }

    fn parse(merges: &str, vocab: &str, origin: &str) -> Result<Self, TextError> {
        let mut ranks = HashMap::new();
        let mut rank = 0;
        for (idx, line) in merges.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split(' ');
            let (Some(left), Some(right), None) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(TextError::LexiconFormat {
                    path: origin.to_string(),
                    line: idx + 1,
                    msg: "expected `left right`".to_string(),
                });
            };
            ranks.insert((left.to_string(), right.to_string()), rank);
            rank += 1;
        }
        let vocab = vocab
            .lines()
            .filter_map(|l| l.split('\t').next())
            .filter(|p| !p.is_empty())
            .map(str::to_string)
            .collect();
        Ok(Self { ranks, vocab })
    }

    pub fn vocab_contains(&self, piece: &str) -> bool {
        self.vocab.contains(piece)
    }

    fn encode_word(&self, word: &str) -> Vec<String> {
        let mut symbols: Vec<String> = word.chars().map(|c| c.to_string()).collect();
        symbols.push(END_OF_WORD.to_string());
        loop {
            let mut best: Option<(usize, usize)> = None;
            for i in 0..symbols.len() - 1 {
                let key = (symbols[i].clone(), symbols[i + 1].clone());
                if let Some(&rank) = self.ranks.get(&key) {
                    if best.is_none_or(|(r, _)| rank < r) {
                        best = Some((rank, i));
                    }
                }
            }
            let Some((_, i)) = best else { break };
            let merged = format!("{}{}", symbols[i], symbols[i + 1]);
            symbols.splice(i..=i + 1, [merged]);
        }
        symbols
    }
}

impl SubwordTokenizer for BpeTokenizer {
    fn encode(&self, text: &str) -> Result<Vec<String>, TextError> {
        if text.trim().is_empty() {
            return Err(TextError::TokenizerFailure("empty input".to_string()));
        }
        let mut pieces = Vec::new();
        for word in text.split_whitespace() {
            pieces.extend(self.encode_word(word));
        }
        Ok(pieces)
    }

    fn decode(&self, pieces: &[String]) -> Result<String, TextError> {
        let mut out = String::new();
        for piece in pieces {
            if let Some(stem) = piece.strip_suffix(END_OF_WORD) {
                out.push_str(stem);
                out.push(' ');
            } else {
                out.push_str(piece);
            }
        }
        Ok(out.trim_end().to_string())
    }
}
