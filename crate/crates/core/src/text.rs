//! Small text utilities shared by the simulated model and operators.

use std::collections::{BTreeMap, BTreeSet};

const STOPWORDS: &[&str] = &[
    "about", "after", "again", "also", "been", "before", "being", "could", "does", "down", "each",
    "from", "have", "having", "into", "more", "most", "other", "over", "same", "should", "some",
    "such", "than", "that", "their", "them", "then", "there", "these", "they", "this", "those",
    "through", "under", "until", "very", "were", "what", "when", "where", "which", "while",
    "will", "with", "would", "your", "patient", "noted",
];

/// Lowercased alphanumeric tokens of at least four chars, minus stopwords.
pub(crate) fn content_tokens(text: &str) -> Vec<String> {
    crate::backend::tokenize(text)
        .into_iter()
        .filter(|t| t.chars().count() >= 4 && !STOPWORDS.contains(&t.as_str()))
        .collect()
}

pub(crate) fn jaccard(a: &str, b: &str) -> f64 {
    let a: BTreeSet<String> = content_tokens(a).into_iter().collect();
    let b: BTreeSet<String> = content_tokens(b).into_iter().collect();
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / a.union(&b).count() as f64
}

/// Most frequent content token, ties broken alphabetically.
pub(crate) fn dominant_token(text: &str) -> Option<String> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for t in content_tokens(text) {
        *counts.entry(t).or_default() += 1;
    }
    let best = counts.values().copied().max()?;
    counts.into_iter().find(|(_, c)| *c == best).map(|(t, _)| t)
}

/// Text up to and including the first `.`, `!` or `?`, trimmed.
pub(crate) fn first_sentence(text: &str) -> &str {
    let t = text.trim();
    match t.find(['.', '!', '?']) {
        Some(i) => &t[..=i],
        None => t,
    }
}

pub(crate) fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text.trim();
    while !rest.is_empty() {
        let s = first_sentence(rest);
        out.push(s);
        rest = rest[rest.find(s).unwrap_or(0) + s.len()..].trim_start();
    }
    out
}

/// First case-insensitive occurrence of `needle`, as char offsets.
pub(crate) fn find_ci(haystack: &str, needle: &str) -> Option<(usize, usize)> {
    let hay: Vec<char> = haystack.chars().collect();
    let pat: Vec<char> = needle.chars().collect();
    if pat.is_empty() || pat.len() > hay.len() {
        return None;
    }
    let same = |a: char, b: char| a == b || a.to_lowercase().eq(b.to_lowercase());
    (0..=hay.len() - pat.len())
        .find(|&i| pat.iter().enumerate().all(|(j, &p)| same(hay[i + j], p)))
        .map(|i| (i, i + pat.len()))
}
