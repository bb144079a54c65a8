//! Head-averaged attention scores over visual tokens and top-k selection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::PatchGrid;

const PROB_SUM_TOL: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttentionError {
    #[error("empty logit row")]
    EmptyRow,
    #[error("non-finite attention value")]
    NonFinite,
    #[error("attention has no heads")]
    NoHeads,
    #[error("expected {expected} values ({heads} heads x {tokens} tokens), got {found}")]
    ShapeMismatch { heads: usize, tokens: usize, expected: usize, found: usize },
    #[error("head {head} is not a probability row (sum {sum})")]
    NotNormalized { head: usize, sum: f64 },
}

/// Whether rows still need a softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Logits,
    Probabilities,
}

/// Per-head attention of one query token over the visual tokens,
/// stored row-major as `heads x grid.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawAttentionRows {
    pub grid: PatchGrid,
    pub heads: usize,
    /// Hidden size; informational only.
    pub model_dim: Option<usize>,
    pub kind: RowKind,
    pub values: Vec<f64>,
}

impl RawAttentionRows {
    pub fn tokens(&self) -> usize {
        self.grid.len()
    }

    pub fn validate(&self) -> Result<(), AttentionError> {
        if self.heads == 0 {
            return Err(AttentionError::NoHeads);
        }
        let expected = self.heads * self.tokens();
        if self.values.len() != expected {
            return Err(AttentionError::ShapeMismatch {
                heads: self.heads,
                tokens: self.tokens(),
                expected,
                found: self.values.len(),
            });
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(AttentionError::NonFinite);
        }
        if self.kind == RowKind::Probabilities {
            for (head, row) in self.values.chunks(self.tokens()).enumerate() {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|&v| v < 0.0) || (sum - 1.0).abs() > PROB_SUM_TOL {
                    return Err(AttentionError::NotNormalized { head, sum });
                }
            }
        }
        Ok(())
    }
}

/// Averaged per-token scores; sums to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionScores {
    pub grid: PatchGrid,
    pub scores: Vec<f64>,
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax_row(logits: &[f64]) -> Result<Vec<f64>, AttentionError> {
    if logits.is_empty() {
        return Err(AttentionError::EmptyRow);
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(AttentionError::NonFinite);
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

pub fn mean_heads(raw: &RawAttentionRows) -> Result<AttentionScores, AttentionError> {
    raw.validate()?;
    let tokens = raw.tokens();
    let mut acc = vec![0.0; tokens];
    for row in raw.values.chunks(tokens) {
        let probs;
        let row = match raw.kind {
            RowKind::Probabilities => row,
            RowKind::Logits => {
                probs = softmax_row(row)?;
                &probs
            }
        };
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    let h = raw.heads as f64;
    acc.iter_mut().for_each(|a| *a /= h);
    Ok(AttentionScores { grid: raw.grid, scores: acc })
}

/// Indices of the `k` highest scores, descending; equal scores keep
/// ascending index order.
pub fn top_k_tokens(scores: &AttentionScores, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.scores.len()).collect();
    let s = &scores.scores;
    // stable sort keeps ascending index among ties
    idx.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    idx.truncate(k);
    idx
}
