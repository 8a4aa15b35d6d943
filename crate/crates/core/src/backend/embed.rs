use super::{whitespace_tokens, Embedding, TokenUsage};

pub const MOCK_EMBED_DIM: usize = 64;

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hashed bag of words: each token adds 1 to bucket `fnv1a(token) % 64`,
/// then the vector is L2-normalized. No tokens gives the zero vector.
pub fn hash_embed(text: &str) -> Embedding {
    let mut v = vec![0.0; MOCK_EMBED_DIM];
    let tokens = tokenize(text);
    for t in &tokens {
        v[(fnv1a(t.as_bytes()) % MOCK_EMBED_DIM as u64) as usize] += 1.0;
    }
    let norm = v.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    Embedding {
        vector: v,
        usage: TokenUsage {
            prompt_tokens: whitespace_tokens(text),
            ..TokenUsage::default()
        },
        empty: tokens.is_empty(),
    }
}

/// Cosine similarity; zero when either side is the zero vector.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
