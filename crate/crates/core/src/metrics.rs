//! Classification metrics: accuracy, F1 variants, rank-based AUC, and the
//! per-class confusion matrix.

use crate::error::MetricsError;
use serde::{Deserialize, Serialize};

type Result<T> = std::result::Result<T, MetricsError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Binary,
    Multiclass,
}

/// Evaluation report. Binary tasks fill `f1` (positive class = class 1) and
/// `auc`; multiclass tasks report the weighted and macro F1 instead.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: TaskKind,
    pub accuracy: f64,
    pub f1: Option<f64>,
    pub f1_weighted: f64,
    pub f1_macro: f64,
    pub auc: Option<f64>,
    /// confusion[true][predicted]
    pub confusion: Vec<Vec<usize>>,
    pub n_evaluated: usize,
}

/// Computes all metrics. Binary AUC needs positive-class scores; it is
/// undefined (an error) when the labels hold a single class.
pub fn compute_metrics(
    predictions: &[usize],
    scores: Option<&[f64]>,
    labels: &[usize],
    task: TaskKind,
) -> Result<MetricsReport> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(predictions.len(), labels.len()));
    }
    if let Some(s) = scores {
        if s.len() != labels.len() {
            return Err(MetricsError::LengthMismatch(s.len(), labels.len()));
        }
    }
    if labels.is_empty() {
        return Err(MetricsError::Empty);
    }

    let n_classes = predictions
        .iter()
        .chain(labels.iter())
        .max()
        .map(|&m| m + 1)
        .unwrap_or(1)
        .max(2);
    if task == TaskKind::Binary {
        if let Some(&bad) = labels.iter().chain(predictions.iter()).find(|&&c| c > 1) {
            return Err(MetricsError::NotBinary(bad));
        }
    }
    let n_classes = if task == TaskKind::Binary { 2 } else { n_classes };

    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    let mut correct = 0usize;
    for (&p, &y) in predictions.iter().zip(labels.iter()) {
        confusion[y][p] += 1;
        if p == y {
            correct += 1;
        }
    }
    let accuracy = correct as f64 / labels.len() as f64;

    let per_class_f1: Vec<f64> = (0..n_classes).map(|c| class_f1(&confusion, c)).collect();
    let supports: Vec<usize> = (0..n_classes).map(|c| confusion[c].iter().sum()).collect();
    let total: usize = supports.iter().sum();
    let f1_weighted = per_class_f1
        .iter()
        .zip(supports.iter())
        .map(|(f, &s)| f * s as f64 / total as f64)
        .sum();
    let f1_macro = per_class_f1.iter().sum::<f64>() / n_classes as f64;

    let (f1, auc) = match task {
        TaskKind::Binary => {
            let auc = match scores {
                Some(s) => Some(binary_auc(s, labels)?),
                None => None,
            };
            (Some(per_class_f1[1]), auc)
        }
        TaskKind::Multiclass => (None, None),
    };

    Ok(MetricsReport {
        task,
        accuracy,
        f1,
        f1_weighted,
        f1_macro,
        auc,
        confusion,
        n_evaluated: labels.len(),
    })
}

fn class_f1(confusion: &[Vec<usize>], c: usize) -> f64 {
    let n = confusion.len();
    let tp = confusion[c][c];
    let fp: usize = (0..n).filter(|&y| y != c).map(|y| confusion[y][c]).sum();
    let fn_: usize = (0..n).filter(|&p| p != c).map(|p| confusion[c][p]).sum();
    if 2 * tp + fp + fn_ == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

/// AUC by the rank statistic: average ranks over ties, so tied pairs count
/// one half each.
pub fn binary_auc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClassAuc);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // average rank within tie groups (1-based ranks)
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let auc = (rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos * n_neg) as f64;
    Ok(auc)
}
