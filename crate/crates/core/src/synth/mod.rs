//! Synthetic transaction corpora and ground-truth compromise injection.
//!
//! All randomness is counter-based: every draw comes from a ChaCha stream
//! selected by `(seed, purpose, entity)`, so results do not depend on the
//! order in which entities are processed.

mod generate;
mod inject;
pub mod fixtures;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use generate::{generate_corpus, GeneratorConfig};
pub use inject::{inject_pocs, Culprit, GroundTruth, Injection, InjectionConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    InvalidGenerator(String),
    #[error("invalid injection config: {0}")]
    InvalidInjection(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("only {eligible} buckets have at least {min_cards} distinct cards; cannot inject {requested} points of compromise")]
    NotEnoughBuckets {
        requested: usize,
        eligible: usize,
        min_cards: usize,
    },
    #[error("noise needs {needed} clean cards but only {available} were never stolen (short by {})", needed - available)]
    NotEnoughCleanCards { needed: usize, available: usize },
}

/// Purposes that select disjoint random streams.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub(crate) enum Stream {
    Card = 1,
    PocSelection = 3,
    Steal = 4,
    Flag = 5,
    NoiseSelection = 6,
    NoiseFlag = 7,
    Graph = 8,
}

/// Independent generator for `(seed, purpose, entity)`.
pub(crate) fn stream_rng(seed: u64, purpose: Stream, entity: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (purpose as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(entity);
    rng
}

/// FNV-1a over the given byte strings, with a separator between parts.
pub(crate) fn entity_key(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in part.iter().chain(std::iter::once(&0xff)) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}
