//! Classification and probability-prediction metrics.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{logistic, Theta};

/// Confusion-matrix metrics at a fixed cutoff. Precision and F1 are absent
/// when there are no positive predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub recall: f64,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

/// Full prediction report for one fitted model on one labeled set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionReport {
    pub auc: f64,
    pub cutoff: f64,
    pub accuracy: f64,
    pub recall: f64,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
    pub mad: f64,
}

/// Fitted case probabilities phi(x_i, theta), elementwise.
pub fn predict_proba(theta: &Theta, xs: &[DVector<f64>]) -> Result<Vec<f64>> {
    for x in xs {
        if x.len() != theta.dim() {
            return Err(Error::Dimension {
                expected: theta.dim(),
                found: x.len(),
                context: "covariate vector for prediction",
            });
        }
    }
    Ok(xs.iter().map(|x| logistic(theta.linear(x))).collect())
}

fn check_scores(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            found: scores.len(),
            context: "score vector",
        });
    }
    let pos = labels.iter().filter(|&&y| y).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Argument(
            "both classes must be present to compute ranking metrics".into(),
        ));
    }
    Ok((pos, neg))
}

/// Area under the ROC curve as the Mann-Whitney statistic, with the
/// midrank convention for ties.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_scores(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks over tied score groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j + 1) as f64 / 2.0; // ranks are 1-based
        for &idx in &order[i..j] {
            if labels[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let pos = pos as f64;
    let neg = neg as f64;
    Ok((rank_sum_pos - pos * (pos + 1.0) / 2.0) / (pos * neg))
}

/// Observed score maximizing TPR - FPR, ties broken toward the larger
/// cutoff. Predictions use `score >= cutoff`.
pub fn youden_cutoff(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_scores(scores, labels)?;
    let mut candidates: Vec<f64> = scores.to_vec();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut best = candidates[0];
    let mut best_j = f64::NEG_INFINITY;
    for &cut in &candidates {
        let tp = scores
            .iter()
            .zip(labels)
            .filter(|(s, &y)| y && **s >= cut)
            .count();
        let fp = scores
            .iter()
            .zip(labels)
            .filter(|(s, &y)| !y && **s >= cut)
            .count();
        let j = tp as f64 / pos as f64 - fp as f64 / neg as f64;
        if j >= best_j {
            best_j = j;
            best = cut;
        }
    }
    Ok(best)
}

/// Accuracy, recall, precision, and F1 at a fixed cutoff.
pub fn classification_metrics(
    scores: &[f64],
    labels: &[bool],
    cutoff: f64,
) -> Result<ClassificationMetrics> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            found: scores.len(),
            context: "score vector",
        });
    }
    if scores.is_empty() {
        return Err(Error::Argument("empty input".into()));
    }
    if !cutoff.is_finite() {
        return Err(Error::Argument("cutoff must be finite".into()));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut tn = 0usize;
    let mut fn_ = 0usize;
    for (s, &y) in scores.iter().zip(labels) {
        let pred = *s >= cutoff;
        match (pred, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let total = scores.len() as f64;
    let accuracy = (tp + tn) as f64 / total;
    let recall = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };
    let precision = if tp + fp > 0 {
        Some(tp as f64 / (tp + fp) as f64)
    } else {
        None
    };
    let f1 = precision.and_then(|p| {
        if p + recall > 0.0 {
            Some(2.0 * p * recall / (p + recall))
        } else {
            None
        }
    });
    Ok(ClassificationMetrics {
        accuracy,
        recall,
        precision,
        f1,
    })
}

/// Mean absolute deviation between outcomes and predicted probabilities.
pub fn mad(probs: &[f64], labels: &[bool]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            found: probs.len(),
            context: "probability vector",
        });
    }
    if probs.is_empty() {
        return Err(Error::Argument("empty input".into()));
    }
    Ok(probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| (y as u8 as f64 - p).abs())
        .sum::<f64>()
        / probs.len() as f64)
}

/// Evaluate a fitted model on a labeled set, with the cutoff chosen on a
/// training set when one is supplied.
pub fn report(
    theta: &Theta,
    test_xs: &[DVector<f64>],
    test_labels: &[bool],
    train: Option<(&[DVector<f64>], &[bool])>,
) -> Result<PredictionReport> {
    let test_scores = predict_proba(theta, test_xs)?;
    let cutoff = match train {
        Some((train_xs, train_labels)) => {
            let train_scores = predict_proba(theta, train_xs)?;
            youden_cutoff(&train_scores, train_labels)?
        }
        None => youden_cutoff(&test_scores, test_labels)?,
    };
    let auc = auc(&test_scores, test_labels)?;
    let metrics = classification_metrics(&test_scores, test_labels, cutoff)?;
    let mad = mad(&test_scores, test_labels)?;
    Ok(PredictionReport {
        auc,
        cutoff,
        accuracy: metrics.accuracy,
        recall: metrics.recall,
        precision: metrics.precision,
        f1: metrics.f1,
        mad,
    })
}
