//! Evaluation metrics: confusion matrices, macro F1, accuracy, multiclass
//! MCC, binary anomaly-detection F1 and cross-client averaging.

use serde::{Deserialize, Serialize};

use crate::dm2a::{AnomalyStatus, BENIGN};
use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = counts.len();
        if let Some(row) = counts.iter().find(|r| r.len() != c) {
            return Err(Error::shape("confusion matrix row", c, row.len()));
        }
        Ok(Self { counts })
    }

    pub fn from_predictions(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::shape("prediction count", truth.len(), predicted.len()));
        }
        let mut cm = Self::zeros(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            for label in [t, p] {
                if label >= classes {
                    return Err(Error::LabelOutOfRange { label, classes });
                }
            }
            cm.counts[t][p] += 1;
        }
        Ok(cm)
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|k| self.counts[k][k]).sum()
    }

    pub fn true_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn predicted_totals(&self) -> Vec<u64> {
        (0..self.classes())
            .map(|k| self.counts.iter().map(|r| r[k]).sum())
            .collect()
    }

    /// Benign-vs-attack 2×2 matrix; index 1 is "attack".
    pub fn collapse_binary(&self) -> Self {
        let mut out = Self::zeros(2);
        for (t, row) in self.counts.iter().enumerate() {
            for (p, &n) in row.iter().enumerate() {
                out.counts[usize::from(t != BENIGN)][usize::from(p != BENIGN)] += n;
            }
        }
        out
    }

    fn ensure_nonempty(&self) -> Result<()> {
        if self.total() == 0 {
            Err(Error::Empty("confusion matrix"))
        } else {
            Ok(())
        }
    }
}

/// `2·tp / (2·tp + fp + fn)`, `None` when no positive is present or predicted.
pub fn binary_f1(tp: u64, fp: u64, fn_: u64) -> Option<f64> {
    let denom = 2 * tp + fp + fn_;
    (denom > 0).then(|| 2.0 * tp as f64 / denom as f64)
}

pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64> {
    cm.ensure_nonempty()?;
    let truths = cm.true_totals();
    let preds = cm.predicted_totals();
    let scores: Vec<f64> = (0..cm.classes())
        .filter_map(|k| {
            let tp = cm.counts[k][k];
            binary_f1(tp, preds[k] - tp, truths[k] - tp)
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    cm.ensure_nonempty()?;
    Ok(cm.trace() as f64 / cm.total() as f64)
}

/// Generalized (Gorodkin) MCC; 0 when either marginal is concentrated on one class.
pub fn mcc(cm: &ConfusionMatrix) -> Result<f64> {
    cm.ensure_nonempty()?;
    let c = cm.trace() as f64;
    let s = cm.total() as f64;
    let p = cm.predicted_totals();
    let t = cm.true_totals();
    let pt: f64 = p.iter().zip(&t).map(|(&a, &b)| a as f64 * b as f64).sum();
    let pp: f64 = p.iter().map(|&a| (a as f64).powi(2)).sum();
    let tt: f64 = t.iter().map(|&a| (a as f64).powi(2)).sum();
    let denom = ((s * s - pp) * (s * s - tt)).sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((c * s - pt) / denom)
}

/// Binary F1 with Anomalous as positive; true labels collapse benign → Normal.
/// `None` when the client has no attacks and raises no alarms.
pub fn ad_f1(truth: &[usize], predictions: &[AnomalyStatus]) -> Result<Option<f64>> {
    if truth.len() != predictions.len() {
        return Err(Error::shape("prediction count", truth.len(), predictions.len()));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&t, &p) in truth.iter().zip(predictions) {
        match (t != BENIGN, p == AnomalyStatus::Anomalous) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(binary_f1(tp, fp, fn_))
}

/// Anomaly status implied by a predicted class.
pub fn status_from_class(class: usize) -> AnomalyStatus {
    if class == BENIGN {
        AnomalyStatus::Normal
    } else {
        AnomalyStatus::Anomalous
    }
}

/// Unweighted mean over clients that produced the metric; `None` if none did.
pub fn average_over_clients(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    let skipped = values.len() - defined.len();
    if skipped > 0 {
        log::debug!("{skipped} client(s) excluded from average: metric undefined");
    }
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cm(rows: &[&[u64]]) -> ConfusionMatrix {
        ConfusionMatrix::from_counts(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn perfect_diagonal() {
        let m = cm(&[&[3, 0, 0], &[0, 4, 0], &[0, 0, 5]]);
        assert_eq!(macro_f1(&m).unwrap(), 1.0);
        assert_eq!(accuracy(&m).unwrap(), 1.0);
        assert_eq!(mcc(&m).unwrap(), 1.0);
    }

    #[test]
    fn uniform_two_class() {
        let m = cm(&[&[5, 5], &[5, 5]]);
        assert_eq!(macro_f1(&m).unwrap(), 0.5);
        assert_eq!(accuracy(&m).unwrap(), 0.5);
        assert_eq!(mcc(&m).unwrap(), 0.0);
    }

    #[test]
    fn anti_diagonal_is_zero_f1() {
        assert_eq!(macro_f1(&cm(&[&[0, 4], &[6, 0]])).unwrap(), 0.0);
    }

    #[test]
    fn binary_mcc_matches_closed_form() {
        // rows = truth (positive, negative)
        let m = cm(&[&[40, 20], &[10, 30]]);
        let (tp, fn_, fp, tn) = (40.0_f64, 20.0, 10.0, 30.0);
        let expected = (tp * tn - fp * fn_) / ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
        assert!((mcc(&m).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.408_248_290_463_863).abs() < 1e-12);
    }

    #[test]
    fn rank_one_mcc_is_zero() {
        assert_eq!(mcc(&cm(&[&[2, 4], &[3, 6]])).unwrap(), 0.0);
        assert_eq!(mcc(&cm(&[&[7, 0], &[3, 0]])).unwrap(), 0.0);
    }

    #[test]
    fn absent_class_excluded_from_macro() {
        let m = cm(&[&[4, 0, 0], &[0, 4, 0], &[0, 0, 0]]);
        assert_eq!(macro_f1(&m).unwrap(), 1.0);
    }

    #[test]
    fn empty_matrix_errors() {
        let m = ConfusionMatrix::zeros(3);
        assert!(macro_f1(&m).is_err());
        assert!(accuracy(&m).is_err());
        assert!(mcc(&m).is_err());
    }

    #[test]
    fn ad_f1_examples() {
        use AnomalyStatus::*;
        let mut truth = vec![1; 10];
        let mut pred = vec![Anomalous; 8];
        pred.extend([Normal, Normal]);
        truth.extend([0, 0]);
        pred.extend([Anomalous, Anomalous]);
        assert!((ad_f1(&truth, &pred).unwrap().unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(ad_f1(&[1, 2], &[Normal, Normal]).unwrap(), Some(0.0));
        assert_eq!(ad_f1(&[0, 2], &[Normal, Anomalous]).unwrap(), Some(1.0));
        assert_eq!(ad_f1(&[0, 0], &[Normal, Normal]).unwrap(), None);
    }

    #[test]
    fn averaging_masks_undefined() {
        assert_eq!(average_over_clients(&[Some(0.7)]), Some(0.7));
        assert!((average_over_clients(&[Some(0.8), Some(0.9)]).unwrap() - 0.85).abs() < 1e-12);
        assert_eq!(average_over_clients(&[Some(0.8), None]), Some(0.8));
        assert_eq!(average_over_clients(&[None]), None);
    }

    fn permuted(truth: &[usize], pred: &[usize], perm: &[usize]) -> (Vec<usize>, Vec<usize>) {
        (
            truth.iter().map(|&t| perm[t]).collect(),
            pred.iter().map(|&p| perm[p]).collect(),
        )
    }

    proptest! {
        #[test]
        fn class_permutation_invariance(
            pairs in prop::collection::vec((0usize..4, 0usize..4), 1..80),
            perm in Just((0..4usize).collect::<Vec<_>>()).prop_shuffle(),
        ) {
            let (truth, pred): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let (t2, p2) = permuted(&truth, &pred, &perm);
            let a = ConfusionMatrix::from_predictions(&truth, &pred, 4).unwrap();
            let b = ConfusionMatrix::from_predictions(&t2, &p2, 4).unwrap();
            prop_assert!((macro_f1(&a).unwrap() - macro_f1(&b).unwrap()).abs() < 1e-12);
            prop_assert_eq!(accuracy(&a).unwrap(), accuracy(&b).unwrap());
            prop_assert!((mcc(&a).unwrap() - mcc(&b).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn ranges_hold(pairs in prop::collection::vec((0usize..5, 0usize..5), 1..80)) {
            let (truth, pred): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let m = ConfusionMatrix::from_predictions(&truth, &pred, 5).unwrap();
            prop_assert!((0.0..=1.0).contains(&macro_f1(&m).unwrap()));
            prop_assert!((0.0..=1.0).contains(&accuracy(&m).unwrap()));
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&mcc(&m).unwrap()));
        }

        #[test]
        fn classifier_ad_path_matches_binary_collapse(
            pairs in prop::collection::vec((0usize..4, 0usize..4), 1..80),
        ) {
            let (truth, pred): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let status: Vec<AnomalyStatus> = pred.iter().map(|&p| status_from_class(p)).collect();
            let bin = ConfusionMatrix::from_predictions(&truth, &pred, 4).unwrap().collapse_binary();
            let c = bin.counts();
            prop_assert_eq!(ad_f1(&truth, &status).unwrap(), binary_f1(c[1][1], c[0][1], c[1][0]));
        }
    }
}
