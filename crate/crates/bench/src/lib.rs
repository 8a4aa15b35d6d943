//! Inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semflow_core::harness::{gen_stream, GenConfig, ALPHABET};
use semflow_core::{Document, SemanticEvent};

/// `n` events over `entities` entities, one second apart, types drawn from
/// the oracle alphabet.
pub fn event_stream(seed: u64, n: usize, entities: usize) -> Vec<SemanticEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let ty = ALPHABET[rng.gen_range(0..ALPHABET.len())];
            SemanticEvent::new(format!("ev{i}"), format!("e{}", i % entities.max(1)), ty, i as i64)
        })
        .collect()
}

pub fn documents(seed: u64, entities: usize, docs_per_entity: usize) -> Vec<Document> {
    let config = GenConfig {
        entities,
        docs_per_entity,
        planted_patterns: entities / 4,
        ..GenConfig::default()
    };
    gen_stream(seed, &config).expect("valid generator config").documents
}
