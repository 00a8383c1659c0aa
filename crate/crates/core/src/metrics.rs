//! Reliability metrics: AUROC, FPR at fixed TPR, AUPR, ECE, accuracy.
//!
//! ID scores are the positive class and higher scores mean "more ID"
//! throughout. Ties in AUROC count one half (Mann–Whitney convention);
//! FPR-95 uses a conservative step function with no interpolation.

use crate::error::{Error, Result};

/// Summary row produced by an evaluation run.
#[derive(Debug, Clone, Copy)]
pub struct MetricsReport {
    pub auroc: f64,
    pub fpr95: f64,
    pub aupr: f64,
    pub ece: f64,
    pub accuracy: f64,
}

/// Per-bin calibration tallies over equal-width bins of `[0, 1]`.
#[derive(Debug, Clone)]
pub struct CalibrationBins {
    pub num_bins: usize,
    /// `(count, mean confidence, mean accuracy)` per bin.
    pub bins: Vec<(usize, f64, f64)>,
}

fn check_scores(id: &[f64], ood: &[f64]) -> Result<()> {
    if id.is_empty() || ood.is_empty() {
        return Err(Error::Input("empty score set".into()));
    }
    if id.iter().chain(ood).any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite score".into()));
    }
    Ok(())
}

/// Area under the ROC curve via the rank-sum form of the Mann–Whitney
/// statistic: `(sum over pairs [id > ood] + 0.5 [id == ood]) / (n * m)`.
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_scores(id_scores, ood_scores)?;
    let n = id_scores.len();
    let m = ood_scores.len();
    let mut all: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&s| (s, true))
        .chain(ood_scores.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // average ranks over tie groups, then sum the ID ranks
    let mut rank_sum_id = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j averaged
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for item in &all[i..j] {
            if item.1 {
                rank_sum_id += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_id - (n * (n + 1)) as f64 / 2.0;
    Ok(u / (n as f64 * m as f64))
}

/// Threshold at the largest value keeping `TPR >= tpr_target` (TPR counts
/// `id >= tau`), then the fraction of OOD scores at or above it.
pub fn fpr_at_tpr(id_scores: &[f64], ood_scores: &[f64], tpr_target: f64) -> Result<f64> {
    check_scores(id_scores, ood_scores)?;
    if !(0.0 < tpr_target && tpr_target <= 1.0) {
        return Err(Error::Input(format!(
            "tpr target {} outside (0, 1]",
            tpr_target
        )));
    }
    let n = id_scores.len();
    let need = (tpr_target * n as f64).ceil() as usize;
    let mut sorted: Vec<f64> = id_scores.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let tau = sorted[need - 1];
    let fp = ood_scores.iter().filter(|&&s| s >= tau).count();
    Ok(fp as f64 / ood_scores.len() as f64)
}

/// Bin index for a confidence under right-closed equal-width bins: bin `b`
/// covers `(b/B, (b+1)/B]`, with zero landing in bin 0.
pub fn calibration_bin(confidence: f64, num_bins: usize) -> usize {
    for b in 0..num_bins {
        let hi = (b + 1) as f64 / num_bins as f64;
        if confidence <= hi {
            return b;
        }
    }
    num_bins - 1
}

/// Bin tallies for the expected calibration error.
pub fn calibration_bins(
    confidences: &[f64],
    correct: &[bool],
    num_bins: usize,
) -> Result<CalibrationBins> {
    if confidences.is_empty() {
        return Err(Error::Input("empty confidence set".into()));
    }
    if confidences.len() != correct.len() {
        return Err(Error::Input("confidence/correctness length mismatch".into()));
    }
    if num_bins == 0 {
        return Err(Error::Input("need at least one bin".into()));
    }
    if confidences.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
        return Err(Error::Input("confidence outside [0, 1]".into()));
    }
    let mut counts = vec![0usize; num_bins];
    let mut conf_sums = vec![0.0; num_bins];
    let mut acc_sums = vec![0.0; num_bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        let b = calibration_bin(c, num_bins);
        counts[b] += 1;
        conf_sums[b] += c;
        acc_sums[b] += if ok { 1.0 } else { 0.0 };
    }
    let bins = (0..num_bins)
        .map(|b| {
            if counts[b] == 0 {
                (0, 0.0, 0.0)
            } else {
                let n = counts[b] as f64;
                (counts[b], conf_sums[b] / n, acc_sums[b] / n)
            }
        })
        .collect();
    Ok(CalibrationBins { num_bins, bins })
}

/// Expected calibration error: `sum_b (n_b / N) |acc_b - conf_b|`.
pub fn ece(confidences: &[f64], correct: &[bool], num_bins: usize) -> Result<f64> {
    let bins = calibration_bins(confidences, correct, num_bins)?;
    let total = confidences.len() as f64;
    Ok(bins
        .bins
        .iter()
        .map(|&(n, conf, acc)| n as f64 / total * (acc - conf).abs())
        .sum())
}

/// Area under the precision–recall curve by step-wise summation over the
/// distinct score thresholds, descending (ID positive).
pub fn aupr(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_scores(id_scores, ood_scores)?;
    let mut thresholds: Vec<f64> = id_scores.iter().chain(ood_scores).cloned().collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let n = id_scores.len() as f64;
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for &tau in &thresholds {
        let tp = id_scores.iter().filter(|&&s| s >= tau).count() as f64;
        let fp = ood_scores.iter().filter(|&&s| s >= tau).count() as f64;
        let recall = tp / n;
        let precision = tp / (tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(area)
}

/// Fraction of predictions equal to their labels.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(Error::Input("empty or mismatched prediction set".into()));
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}
