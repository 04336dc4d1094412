//! The shuffle granularities.
//!
//! All functions draw from the caller's RNG in a fixed, documented order and
//! return the word-level permutation that reproduces their output, except the
//! token-wise shuffle whose rearrangement lives below the word level.

use super::{detokenize, tokenize_words, PosTag, PosTagger, SubwordTokenizer, TextError, TextPrompt, TextShuffleKind, WordSequence};
use crate::perm::{Permutation, SeededRng};
use std::sync::Arc;

const TRIGRAM: usize = 3;

/// Shuffles the whole word list (the default attack operation).
pub fn shuffle_whole_words(seq: &WordSequence, rng: &mut SeededRng) -> (WordSequence, Permutation) {
    let perm = Permutation::draw(seq.len(), rng);
    (WordSequence::new(perm.apply(seq.words())), perm)
}

/// Groups words into consecutive blocks of three (the final block keeps the
/// 1–2 word remainder) and shuffles the block order, leaving each block's
/// internal order untouched.
pub fn shuffle_trigrams(seq: &WordSequence, rng: &mut SeededRng) -> (WordSequence, Permutation) {
    let n = seq.len();
    let block_count = n.div_ceil(TRIGRAM);
    let block_perm = Permutation::draw(block_count, rng);
    let mut mapping = Vec::with_capacity(n);
    for &block in block_perm.as_slice() {
        let start = block * TRIGRAM;
        let end = (start + TRIGRAM).min(n);
        mapping.extend(start..end);
    }
    let perm = Permutation::new(mapping).expect("block rearrangement is a bijection");
    (WordSequence::new(perm.apply(seq.words())), perm)
}

/// Keeps the trigram blocks in place and shuffles words inside each block
/// independently, in block order.
pub fn shuffle_within_trigrams(
    seq: &WordSequence,
    rng: &mut SeededRng,
) -> (WordSequence, Permutation) {
    let n = seq.len();
    let mut mapping = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let end = (start + TRIGRAM).min(n);
        let inner = Permutation::draw(end - start, rng);
        mapping.extend(inner.as_slice().iter().map(|&i| start + i));
        start = end;
    }
    let perm = Permutation::new(mapping).expect("blockwise rearrangement is a bijection");
    (WordSequence::new(perm.apply(seq.words())), perm)
}

/// Permutes only the positions tagged noun or adjective among themselves;
/// every other position keeps its original word.
pub fn shuffle_pos_nouns_adj(
    seq: &WordSequence,
    tagger: &dyn PosTagger,
    rng: &mut SeededRng,
) -> Result<(WordSequence, Permutation), TextError> {
    let tags = tagger.tag(seq)?;
    if tags.len() != seq.len() {
        return Err(TextError::TaggerFailure(format!(
            "tagger returned {} tags for {} words",
            tags.len(),
            seq.len()
        )));
    }
    let candidates: Vec<usize> = tags
        .iter()
        .enumerate()
        .filter(|(_, tag)| matches!(tag, PosTag::Noun | PosTag::Adjective))
        .map(|(i, _)| i)
        .collect();
    let inner = Permutation::draw(candidates.len(), rng);
    let mut mapping: Vec<usize> = (0..seq.len()).collect();
    for (slot, &src) in inner.as_slice().iter().enumerate() {
        mapping[candidates[slot]] = candidates[src];
    }
    let perm = Permutation::new(mapping).expect("candidate rearrangement is a bijection");
    Ok((WordSequence::new(perm.apply(seq.words())), perm))
}

/// Shuffles the subword token sequence and decodes it back to text.
///
/// Only valid for prompts the tokenizer round-trips (the default tokenizer
/// round-trips everything up to whitespace normalization).
pub fn shuffle_token_wise(
    prompt: &TextPrompt,
    tokenizer: &dyn SubwordTokenizer,
    rng: &mut SeededRng,
) -> Result<TextPrompt, TextError> {
    if prompt.is_blank() {
        return Err(TextError::EmptyPrompt);
    }
    let pieces = tokenizer.encode(prompt.as_str())?;
    let perm = Permutation::draw(pieces.len(), rng);
    let shuffled = perm.apply(&pieces);
    let decoded = tokenizer.decode(&shuffled)?;
    Ok(TextPrompt::new(decoded))
}

/// The pluggable resources some shuffle kinds need.
#[derive(Clone)]
pub struct TextTools {
    pub tagger: Arc<dyn PosTagger>,
    pub tokenizer: Arc<dyn SubwordTokenizer>,
}

impl TextTools {
    /// The bundled lexicon tagger and byte-pair vocabulary.
    pub fn builtin() -> Self {
        Self {
            tagger: Arc::new(super::LexiconTagger::builtin()),
            tokenizer: Arc::new(super::BpeTokenizer::builtin()),
        }
    }
}

impl Default for TextTools {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Applies one shuffle kind to a prompt.
///
/// Returns the mutated prompt and, for the word-level kinds, the permutation
/// that produced it (`None` for `TokenWise`, identity for `None`).
pub fn shuffle_text(
    kind: TextShuffleKind,
    prompt: &TextPrompt,
    tools: &TextTools,
    rng: &mut SeededRng,
) -> Result<(TextPrompt, Option<Permutation>), TextError> {
    if kind == TextShuffleKind::TokenWise {
        let shuffled = shuffle_token_wise(prompt, tools.tokenizer.as_ref(), rng)?;
        return Ok((shuffled, None));
    }
    let seq = tokenize_words(prompt)?;
    if kind == TextShuffleKind::None {
        // Identity on all inputs, whitespace included.
        return Ok((prompt.clone(), Some(Permutation::identity(seq.len()))));
    }
    let (out, perm) = match kind {
        TextShuffleKind::WordWise => shuffle_whole_words(&seq, rng),
        TextShuffleKind::Trigram => shuffle_trigrams(&seq, rng),
        TextShuffleKind::WithinTrigram => shuffle_within_trigrams(&seq, rng),
        TextShuffleKind::PosNounsAdj => shuffle_pos_nouns_adj(&seq, tools.tagger.as_ref(), rng)?,
        TextShuffleKind::None | TextShuffleKind::TokenWise => unreachable!("handled above"),
    };
    Ok((detokenize(&out), Some(perm)))
}
