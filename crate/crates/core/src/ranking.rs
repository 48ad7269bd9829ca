//! Score ranking shared by every classifier head.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub label: usize,
    pub score: f64,
}

/// Ranks labels by descending score, ties broken by ascending label.
/// Labels whose score is `-inf` (or NaN) are never returned. At most `top_k`
/// entries come back.
pub fn rank_by_score(scores: &[f64], top_k: usize) -> Vec<Ranked> {
    let mut ranked: Vec<Ranked> = scores
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.is_nan() && **s != f64::NEG_INFINITY)
        .map(|(label, &score)| Ranked { label, score })
        .collect();
    ranked.sort_by(|a, b| match b.score.total_cmp(&a.score) {
        Ordering::Equal => a.label.cmp(&b.label),
        o => o,
    });
    ranked.truncate(top_k);
    ranked
}

/// Index of the largest score, lowest index on ties; `None` if every score is
/// `-inf` or NaN.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_nan() || s == f64::NEG_INFINITY {
            continue;
        }
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}
