//! Seeded permutations shared by the text and image mutators.
//!
//! Every random rearrangement in the harness is drawn with the Fisher–Yates
//! walk below over a ChaCha8 stream, so a (seed, input) pair fully determines
//! the output on every platform.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The deterministic generator used for all shuffling decisions.
pub type SeededRng = ChaCha8Rng;

/// Creates the harness RNG for a 64-bit seed.
pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PermutationError {
    #[error("mapping of length {len} is not a bijection on 0..{len}")]
    NotABijection { len: usize },
}

/// A bijection on `0..n`. `mapping[i]` is the source index placed at
/// position `i` of the output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Permutation {
    mapping: Vec<usize>,
}

impl Permutation {
    /// Validates that `mapping` hits every index of `0..len` exactly once.
    pub fn new(mapping: Vec<usize>) -> Result<Self, PermutationError> {
        let len = mapping.len();
        let mut seen = vec![false; len];
        for &idx in &mapping {
            if idx >= len || seen[idx] {
                return Err(PermutationError::NotABijection { len });
            }
            seen[idx] = true;
        }
        Ok(Self { mapping })
    }

    pub fn identity(len: usize) -> Self {
        Self {
            mapping: (0..len).collect(),
        }
    }

    /// Draws a uniform permutation of `0..len` by Fisher–Yates over `rng`.
    ///
    /// The walk runs from the last index down to 1, swapping position `i`
    /// with a uniform draw from `0..=i`. `len <= 1` consumes no randomness.
    pub fn draw(len: usize, rng: &mut SeededRng) -> Self {
        let mut mapping: Vec<usize> = (0..len).collect();
        for i in (1..len).rev() {
            let j = rng.gen_range(0..=i);
            mapping.swap(i, j);
        }
        Self { mapping }
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.mapping.iter().enumerate().all(|(i, &s)| i == s)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.mapping
    }

    /// Rearranges `items`, placing `items[mapping[i]]` at position `i`.
    ///
    /// Panics if `items.len()` differs from the permutation length.
    pub fn apply<T: Clone>(&self, items: &[T]) -> Vec<T> {
        assert_eq!(items.len(), self.mapping.len(), "permutation length mismatch");
        self.mapping.iter().map(|&src| items[src].clone()).collect()
    }

    /// The permutation that undoes `self`.
    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.mapping.len()];
        for (dst, &src) in self.mapping.iter().enumerate() {
            inv[src] = dst;
        }
        Self { mapping: inv }
    }
}
