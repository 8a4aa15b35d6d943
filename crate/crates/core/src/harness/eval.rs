//! Match-set and clustering quality measures.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::PatternMatch;

/// Identity of a match for scoring: who, which pattern, and when.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MatchKey {
    pub entity_id: String,
    pub pattern_id: String,
    pub timestamps: Vec<i64>,
}

impl From<&PatternMatch> for MatchKey {
    fn from(m: &PatternMatch) -> Self {
        MatchKey {
            entity_id: m.entity_id.clone(),
            pattern_id: m.pattern_id.clone(),
            timestamps: m.timestamps(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Exact-key precision, recall and F1. With both sets empty every score is
/// 1; an empty side facing a non-empty one scores 0.
pub fn eval_pattern(pred: &[MatchKey], truth: &[MatchKey]) -> PrfScores {
    let p: BTreeSet<&MatchKey> = pred.iter().collect();
    let t: BTreeSet<&MatchKey> = truth.iter().collect();
    let tp = p.intersection(&t).count() as f64;
    let ratio = |num: f64, den: usize, other_empty: bool| {
        if den == 0 {
            if other_empty { 1.0 } else { 0.0 }
        } else {
            num / den as f64
        }
    };
    let precision = ratio(tp, p.len(), t.is_empty());
    let recall = ratio(tp, t.len(), p.is_empty());
    PrfScores {
        precision,
        recall,
        f1: f1(precision, recall),
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("partitions cover different items: {0}")]
    UniverseMismatch(String),
    #[error("item {0} appears in more than one cluster")]
    DuplicateItem(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusteringScores {
    /// Pairwise co-clustering precision, recall and F1.
    pub pairwise_precision: f64,
    pub pairwise_recall: f64,
    pub pairwise_f1: f64,
    pub ari: f64,
    pub purity: f64,
}

fn pairs(n: u64) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

fn labels(p: &[Vec<String>]) -> Result<HashMap<&str, usize>, EvalError> {
    let mut m = HashMap::new();
    for (c, members) in p.iter().enumerate() {
        for item in members {
            if m.insert(item.as_str(), c).is_some() {
                return Err(EvalError::DuplicateItem(item.clone()));
            }
        }
    }
    Ok(m)
}

/// Scores a predicted partition against the true one.
///
/// Pairwise scores count unordered item pairs placed together. With no
/// predicted pairs precision is 0, unless the truth has none either, in
/// which case all pairwise scores are 1. When the ARI denominator vanishes
/// the two partitions are necessarily identical and ARI is 1.
pub fn eval_clustering(pred: &[Vec<String>], truth: &[Vec<String>]) -> Result<ClusteringScores, EvalError> {
    let lp = labels(pred)?;
    let lt = labels(truth)?;
    if lp.len() != lt.len() || lp.keys().any(|k| !lt.contains_key(k)) {
        let missing = lp
            .keys()
            .find(|k| !lt.contains_key(*k))
            .or_else(|| lt.keys().find(|k| !lp.contains_key(*k)))
            .map_or(String::new(), |s| s.to_string());
        return Err(EvalError::UniverseMismatch(missing));
    }
    let n = lp.len() as u64;
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    for (item, &c) in &lp {
        *table.entry((c, lt[item])).or_default() += 1;
    }
    let size = |p: &[Vec<String>]| p.iter().map(|c| c.len() as u64).collect::<Vec<_>>();
    let sum_a: f64 = size(pred).into_iter().map(pairs).sum();
    let sum_b: f64 = size(truth).into_iter().map(pairs).sum();
    let index: f64 = table.values().map(|&v| pairs(v)).sum();

    let (precision, recall) = if sum_a == 0.0 && sum_b == 0.0 {
        (1.0, 1.0)
    } else {
        (
            if sum_a == 0.0 { 0.0 } else { index / sum_a },
            if sum_b == 0.0 { 0.0 } else { index / sum_b },
        )
    };

    let total = pairs(n);
    let expected = if total == 0.0 { 0.0 } else { sum_a * sum_b / total };
    let max = (sum_a + sum_b) / 2.0;
    let ari = if max - expected == 0.0 {
        1.0
    } else {
        (index - expected) / (max - expected)
    };

    let mut best: HashMap<usize, u64> = HashMap::new();
    for (&(c, _), &v) in &table {
        let b = best.entry(c).or_default();
        *b = (*b).max(v);
    }
    let purity = if n == 0 {
        1.0
    } else {
        best.values().sum::<u64>() as f64 / n as f64
    };
    Ok(ClusteringScores {
        pairwise_precision: precision,
        pairwise_recall: recall,
        pairwise_f1: f1(precision, recall),
        ari,
        purity,
    })
}
