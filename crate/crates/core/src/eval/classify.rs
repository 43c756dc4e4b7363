use serde::Serialize;

use super::correlation::average_ranks;
use crate::error::{Error, Result};

fn check_binary(scores: &[f64], labels: &[bool], both_classes: bool) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Misaligned(format!("{} scores vs {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("classification scores".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if both_classes && (pos == 0 || neg == 0) {
        return Err(Error::Degenerate("ROC and PR need both classes".into()));
    }
    if labels.is_empty() {
        return Err(Error::InvalidParameter("empty scored set".into()));
    }
    Ok((pos, neg))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RocPr {
    pub auroc: f64,
    pub auprc: f64,
    /// `(false positive rate, true positive rate)`, from `(0, 0)` to `(1, 1)`.
    pub roc: Vec<(f64, f64)>,
    /// `(recall, precision)`, one point per distinct threshold.
    pub pr: Vec<(f64, f64)>,
}

/// AUROC from the Mann–Whitney rank sum (ties count half) and AUPRC as
/// step-wise average precision, both with tied scores grouped.
pub fn roc_pr(scores: &[f64], labels: &[bool]) -> Result<RocPr> {
    let (pos, neg) = check_binary(scores, labels, true)?;
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    let auroc = u / (pos as f64 * neg as f64);

    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut roc = vec![(0.0, 0.0)];
    let mut pr = Vec::new();
    let mut auprc = 0.0;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if labels[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        auprc += (recall - prev_recall) * precision;
        prev_recall = recall;
        roc.push((fp as f64 / neg as f64, recall));
        pr.push((recall, precision));
    }
    Ok(RocPr { auroc, auprc, roc, pr })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThresholdResult {
    /// Scores strictly above the threshold are predicted positive.
    pub threshold: f64,
    pub accuracy: f64,
    /// Accuracy reached by the half-interval search alone.
    pub bisection_accuracy: f64,
}

/// Candidate thresholds: below the minimum, every midpoint between
/// consecutive distinct scores, and above the maximum.
fn candidates(sorted: &[f64]) -> Vec<f64> {
    let mut c = vec![sorted[0] - 1.0];
    for w in sorted.windows(2) {
        if w[1] > w[0] {
            c.push(w[0] + (w[1] - w[0]) / 2.0);
        }
    }
    c.push(sorted[sorted.len() - 1] + 1.0);
    c
}

/// Accuracy-maximizing threshold. A half-interval search over the candidate
/// thresholds runs first; since accuracy need not be unimodal, its result is
/// checked against the exhaustive optimum, which is what gets returned.
pub fn threshold_search(scores: &[f64], labels: &[bool]) -> Result<ThresholdResult> {
    check_binary(scores, labels, false)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
    let cands = candidates(&sorted);

    // Correct predictions at each candidate, via one sweep: at candidate 0
    // everything is positive; each group of tied scores passed flips.
    let pos = labels.iter().filter(|&&l| l).count();
    let mut correct = Vec::with_capacity(cands.len());
    let mut c = pos;
    correct.push(c);
    let mut i = 0;
    while i < order.len() {
        let s = sorted[i];
        while i < order.len() && sorted[i] == s {
            if labels[order[i]] {
                c -= 1;
            } else {
                c += 1;
            }
            i += 1;
        }
        correct.push(c);
    }
    let n = scores.len() as f64;

    let (mut lo, mut hi) = (0, cands.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if correct[mid] < correct[mid + 1] {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    let bisection = correct[lo];
    let best = (0..cands.len()).fold(0, |b, k| if correct[k] > correct[b] { k } else { b });
    Ok(ThresholdResult {
        threshold: cands[best],
        accuracy: correct[best] as f64 / n,
        bisection_accuracy: bisection as f64 / n,
    })
}

/// Accuracy of the rule `score > threshold ⇒ positive`.
pub fn accuracy_at(scores: &[f64], labels: &[bool], threshold: f64) -> f64 {
    let hits = scores.iter().zip(labels).filter(|(&s, &l)| (s > threshold) == l).count();
    hits as f64 / scores.len() as f64
}
