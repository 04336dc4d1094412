//! Auxiliary mutation operators used in comparison runs, never in the
//! default attack.

use super::{SynonymLexicon, TextError, WordSequence};
use crate::perm::{Permutation, SeededRng};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Marks drawn by `PunctuationInsert`.
pub const PUNCTUATION_MARKS: [&str; 6] = [",", ".", "!", "?", ";", ":"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TextMutationKind {
    RandomReplace,
    RandomInsert,
    RandomDelete,
    SynonymReplace,
    PunctuationInsert,
}

/// Applies one comparison operator to `ceil(rate * n)` positions.
///
/// Draw order is fixed: affected positions are sampled first (a Fisher–Yates
/// prefix, used in ascending order), then any per-position draws follow, so a
/// (seed, input) pair reproduces the mutation exactly.
pub fn apply_text_mutation(
    kind: TextMutationKind,
    seq: &WordSequence,
    rate: f64,
    lexicon: &SynonymLexicon,
    rng: &mut SeededRng,
) -> Result<WordSequence, TextError> {
    if seq.is_empty() {
        return Err(TextError::EmptyPrompt);
    }
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(TextError::InvalidRate(rate));
    }
    let n = seq.len();
    let count = ((rate * n as f64).ceil() as usize).clamp(1, n);

    let words = seq.words();
    let out = match kind {
        TextMutationKind::RandomReplace => {
            let targets = sample_positions(n, count, rng);
            let mut out = words.to_vec();
            for pos in targets {
                out[pos] = random_word(lexicon, words, rng);
            }
            out
        }
        TextMutationKind::RandomInsert => {
            let mut out = words.to_vec();
            for _ in 0..count {
                let slot = rng.gen_range(0..=out.len());
                let word = random_word(lexicon, words, rng);
                out.insert(slot, word);
            }
            out
        }
        TextMutationKind::RandomDelete => {
            if count >= n {
                return Err(TextError::DegenerateResult);
            }
            let mut doomed = sample_positions(n, count, rng);
            doomed.sort_unstable();
            let mut out = Vec::with_capacity(n - count);
            let mut next = doomed.iter().peekable();
            for (i, word) in words.iter().enumerate() {
                if next.peek() == Some(&&i) {
                    next.next();
                } else {
                    out.push(word.clone());
                }
            }
            out
        }
        TextMutationKind::SynonymReplace => {
            let targets = sample_positions(n, count, rng);
            let mut out = words.to_vec();
            for pos in targets {
                if let Some(syns) = lexicon.synonyms_of(&words[pos]) {
                    out[pos] = syns[rng.gen_range(0..syns.len())].clone();
                }
            }
            out
        }
        TextMutationKind::PunctuationInsert => {
            // A boundary sits after each word; marks attach to the word on
            // their left so tokenization keeps them in place.
            let boundaries = sample_positions(n, count, rng);
            let mut out = words.to_vec();
            for boundary in boundaries {
                let mark = PUNCTUATION_MARKS[rng.gen_range(0..PUNCTUATION_MARKS.len())];
                out[boundary].push_str(mark);
            }
            out
        }
    };
    Ok(WordSequence::new(out))
}

/// `count` distinct positions from `0..n`, in ascending order.
fn sample_positions(n: usize, count: usize, rng: &mut SeededRng) -> Vec<usize> {
    let perm = Permutation::draw(n, rng);
    let mut picked: Vec<usize> = perm.as_slice()[..count].to_vec();
    picked.sort_unstable();
    picked
}

fn random_word(lexicon: &SynonymLexicon, fallback: &[String], rng: &mut SeededRng) -> String {
    let pool = lexicon.pool();
    if pool.is_empty() {
        fallback[rng.gen_range(0..fallback.len())].clone()
    } else {
        pool[rng.gen_range(0..pool.len())].clone()
    }
}
