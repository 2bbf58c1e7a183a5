use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Area under the ROC curve; absent when only one class occurs.
    pub auroc: Option<f64>,
    pub positives: usize,
    /// The label has no positive reference sample, so its F1 is reported as 0.
    pub zero_positives: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: f64,
    pub n_samples: usize,
    pub per_label: Vec<LabelMetrics>,
    pub macro_f1: f64,
    /// Mean over labels with a defined ROC area.
    pub macro_auroc: Option<f64>,
}

/// Mann–Whitney estimate with average ranks for ties.
pub fn auroc(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let pos = truth.iter().filter(|&&t| t).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&s| truth[s]).count() as f64 * avg_rank;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Some(u / (pos * neg) as f64)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-label and macro metrics of probabilities `pred` against reference labels,
/// both keyed by sample id.
pub fn evaluate(
    pred_ids: &[String],
    pred: &[Vec<f64>],
    true_ids: &[String],
    truth: &[Vec<u8>],
    threshold: f64,
) -> Result<EvalReport> {
    if pred_ids.len() != pred.len() || true_ids.len() != truth.len() {
        return Err(Error::Alignment("ids and rows differ in count".into()));
    }
    if pred_ids.len() != true_ids.len() {
        return Err(Error::Alignment(format!(
            "{} predictions for {} reference samples",
            pred_ids.len(),
            true_ids.len()
        )));
    }
    let mut by_id: HashMap<&str, usize> = HashMap::with_capacity(pred_ids.len());
    for (i, id) in pred_ids.iter().enumerate() {
        if by_id.insert(id, i).is_some() {
            return Err(Error::Alignment(format!("duplicate prediction id {id}")));
        }
    }
    let n_labels = truth.first().map_or(0, Vec::len);
    let mut rows = Vec::with_capacity(true_ids.len());
    for (id, t) in true_ids.iter().zip(truth) {
        let &i = by_id
            .get(id.as_str())
            .ok_or_else(|| Error::Alignment(format!("no prediction for {id}")))?;
        if pred[i].len() != n_labels || t.len() != n_labels {
            return Err(Error::Alignment(format!("label count mismatch for {id}")));
        }
        rows.push((&pred[i], t));
    }
    if by_id.len() != rows.len() {
        return Err(Error::Alignment("duplicate reference ids".into()));
    }

    let per_label: Vec<LabelMetrics> = (0..n_labels)
        .map(|l| {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for (p, t) in &rows {
                match (p[l] >= threshold, t[l] == 1) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
            let scores: Vec<f64> = rows.iter().map(|(p, _)| p[l]).collect();
            let labels: Vec<bool> = rows.iter().map(|(_, t)| t[l] == 1).collect();
            LabelMetrics {
                precision: ratio(tp, tp + fp),
                recall: ratio(tp, tp + fn_),
                f1: ratio(2 * tp, 2 * tp + fp + fn_),
                auroc: auroc(&scores, &labels),
                positives: tp + fn_,
                zero_positives: tp + fn_ == 0,
            }
        })
        .collect();
    let macro_f1 = if n_labels == 0 {
        0.0
    } else {
        per_label.iter().map(|m| m.f1).sum::<f64>() / n_labels as f64
    };
    let rocs: Vec<f64> = per_label.iter().filter_map(|m| m.auroc).collect();
    let macro_auroc = (!rocs.is_empty()).then(|| rocs.iter().sum::<f64>() / rocs.len() as f64);
    Ok(EvalReport {
        threshold,
        n_samples: rows.len(),
        per_label,
        macro_f1,
        macro_auroc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("r{i}")).collect()
    }

    #[test]
    fn perfect_and_silent_predictions() {
        let truth = vec![vec![1, 0], vec![0, 1], vec![1, 1]];
        let exact: Vec<Vec<f64>> = truth.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let r = evaluate(&ids(3), &exact, &ids(3), &truth, 0.3).unwrap();
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.macro_auroc, Some(1.0));
        let r = evaluate(&ids(3), &vec![vec![0.0; 2]; 3], &ids(3), &truth, 0.3).unwrap();
        assert!(r.per_label.iter().all(|m| m.recall == 0.0 && m.f1 == 0.0));
    }

    #[test]
    fn f1_formula() {
        let truth = vec![vec![1], vec![1], vec![1], vec![0], vec![0]];
        let pred = vec![vec![0.9], vec![0.8], vec![0.1], vec![0.5], vec![0.0]];
        let r = evaluate(&ids(5), &pred, &ids(5), &truth, 0.3).unwrap();
        assert!((r.per_label[0].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.per_label[0].precision - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_positive_labels_are_flagged() {
        let r = evaluate(&ids(2), &[vec![0.9], vec![0.1]], &ids(2), &[vec![0], vec![0]], 0.3).unwrap();
        assert!(r.per_label[0].zero_positives);
        assert_eq!(r.per_label[0].f1, 0.0);
        assert_eq!(r.per_label[0].auroc, None);
    }

    #[test]
    fn misaligned_ids() {
        let other: Vec<String> = vec!["x".into(), "r1".into()];
        assert!(matches!(
            evaluate(&ids(2), &[vec![0.5], vec![0.5]], &other, &[vec![1], vec![0]], 0.3),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn auroc_with_ties() {
        assert_eq!(auroc(&[0.5, 0.5], &[true, false]), Some(0.5));
        assert_eq!(auroc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]), Some(0.75));
    }
}
