use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};

/// Confusion-matrix summary with attacked as the positive class.
///
/// Ratios whose denominator is zero are reported as `None`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub fpr: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn classification_metrics(flagged: &[bool], truth: &[bool]) -> Result<ClassificationMetrics> {
    check_len(truth.len(), flagged.len())?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&f, &t) in flagged.iter().zip(truth) {
        match (f, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Ok(ClassificationMetrics {
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fn_,
        accuracy: ratio(tp + tn, flagged.len()),
        precision,
        recall,
        f1,
        fpr: ratio(fp, fp + tn),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_classifier() {
        let truth = [true, false, false, true];
        let m = classification_metrics(&truth, &truth).unwrap();
        assert_eq!(m.accuracy, Some(1.0));
        assert_eq!(m.fpr, Some(0.0));
        assert_eq!(m.f1, Some(1.0));
    }

    #[test]
    fn all_normal_on_five_percent_attacked() {
        let truth: Vec<bool> = (0..100).map(|i| i < 5).collect();
        let m = classification_metrics(&[false; 100], &truth).unwrap();
        assert_eq!(m.accuracy, Some(0.95));
        assert_eq!(m.recall, Some(0.0));
        assert_eq!(m.precision, None);
        assert_eq!(m.f1, None);
    }

    #[test]
    fn hand_counted_confusion_matrix() {
        // truth:   A A A N N N N N A N
        // flagged: A N A A N N A N N N
        let truth = [true, true, true, false, false, false, false, false, true, false];
        let flagged = [true, false, true, true, false, false, true, false, false, false];
        let m = classification_metrics(&flagged, &truth).unwrap();
        assert_eq!(
            (m.true_positives, m.false_positives, m.true_negatives, m.false_negatives),
            (2, 2, 4, 2)
        );
        assert_eq!(m.accuracy, Some(0.6));
        assert_eq!(m.precision, Some(0.5));
        assert_eq!(m.recall, Some(0.5));
        assert_eq!(m.f1, Some(0.5));
        assert_eq!(m.fpr, Some(2.0 / 6.0));
        assert!(classification_metrics(&flagged[..3], &truth).is_err());
    }
}
