//! Ranking and threshold metrics for imbalanced binary detection.
//!
//! AUC-PRC is average precision without interpolation. Tied scores form one
//! group whose precision is taken after the whole group is admitted, so the
//! value does not depend on input order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("need at least one positive and one negative label (pos={n_pos}, neg={n_neg})")]
    Degenerate { n_pos: usize, n_neg: usize },
    #[error("scores and labels differ in length ({0} vs {1})")]
    Length(usize, usize),
    #[error("k must be >= 1")]
    ZeroK,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub auc_prc: f64,
    pub rec_at_k: f64,
    pub f1: f64,
    #[serde(rename = "k")]
    pub k_used: usize,
    pub n_pos: usize,
    pub n_neg: usize,
}

fn check(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::Length(scores.len(), labels.len()));
    }
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::Degenerate { n_pos, n_neg });
    }
    Ok((n_pos, n_neg))
}

/// Indices sorted by descending score, ties by ascending index.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

pub fn auc_prc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    let (n_pos, _) = check(scores, labels)?;
    let order = ranking(scores);
    let (mut seen, mut tp, mut sum) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let mut group_pos = 0;
        while i < order.len() && scores[order[i]] == s {
            group_pos += labels[order[i]] as usize;
            seen += 1;
            i += 1;
        }
        tp += group_pos;
        sum += group_pos as f64 * tp as f64 / seen as f64;
    }
    Ok(sum / n_pos as f64)
}

/// Fraction of positives recovered in the top `k` (ties broken by index).
pub fn recall_at_k(scores: &[f64], labels: &[bool], k: usize) -> Result<f64, MetricError> {
    let (n_pos, _) = check(scores, labels)?;
    if k == 0 {
        return Err(MetricError::ZeroK);
    }
    let hits = ranking(scores).into_iter().take(k).filter(|&i| labels[i]).count();
    Ok(hits as f64 / n_pos as f64)
}

/// F1 of the positive class, predicting positive when `score >= threshold`.
pub fn f1_at_threshold(scores: &[f64], labels: &[bool], threshold: f64) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
}

/// All three metrics with `k` = number of positives.
pub fn evaluate(scores: &[f64], labels: &[bool]) -> Result<EvalResult, MetricError> {
    let (n_pos, n_neg) = check(scores, labels)?;
    Ok(EvalResult {
        auc_prc: auc_prc(scores, labels)?,
        rec_at_k: recall_at_k(scores, labels, n_pos)?,
        f1: f1_at_threshold(scores, labels, 0.5),
        k_used: n_pos,
        n_pos,
        n_neg,
    })
}
