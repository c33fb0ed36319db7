//! Classification and estimation metrics.

use ndarray::Array2;
use serde::Serialize;

use crate::error::{FusionError, Result};
use crate::types::{ConfusionMatrix, SequencePartition, TransitionMatrix};

fn check_labels(truth: &[usize], pred: &[usize], k: usize) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(FusionError::Dimension(format!(
            "{} true labels against {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    if let Some(bad) = truth.iter().chain(pred).find(|&&l| l == 0 || l > k) {
        return Err(FusionError::InvalidParameter(format!("label {bad} outside 1..={k}")));
    }
    Ok(())
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class `(precision, recall)` for 1-based labels; `0/0` counts as 0.
pub fn precision_recall(truth: &[usize], pred: &[usize], k: usize) -> Result<Vec<(f64, f64)>> {
    check_labels(truth, pred, k)?;
    let mut tp = vec![0usize; k];
    let mut predicted = vec![0usize; k];
    let mut actual = vec![0usize; k];
    for (&t, &p) in truth.iter().zip(pred) {
        predicted[p - 1] += 1;
        actual[t - 1] += 1;
        if t == p {
            tp[t - 1] += 1;
        }
    }
    Ok((0..k).map(|c| (ratio(tp[c], predicted[c]), ratio(tp[c], actual[c]))).collect())
}

/// `(2/K) Σ_k P_k R_k / (P_k + R_k)`, with zero for classes where
/// `P_k + R_k = 0`.
pub fn macro_fscore(pr: &[(f64, f64)]) -> f64 {
    if pr.is_empty() {
        return 0.0;
    }
    let sum: f64 = pr
        .iter()
        .map(|&(p, r)| if p + r > 0.0 { p * r / (p + r) } else { 0.0 })
        .sum();
    2.0 * sum / pr.len() as f64
}

/// Macro F-score of `pred` against `truth`.
pub fn fscore(truth: &[usize], pred: &[usize], k: usize) -> Result<f64> {
    precision_recall(truth, pred, k).map(|pr| macro_fscore(&pr))
}

/// Macro F-score averaged over the segments of `partition`.
pub fn sequence_fscore(truth: &[usize], pred: &[usize], k: usize, partition: &SequencePartition) -> Result<f64> {
    check_labels(truth, pred, k)?;
    if partition.n_items() != truth.len() {
        return Err(FusionError::Dimension("partition does not cover the labels".into()));
    }
    let mut total = 0.0;
    let mut count = 0;
    for seg in partition.segments() {
        total += fscore(&truth[seg.clone()], &pred[seg], k)?;
        count += 1;
    }
    Ok(total / count as f64)
}

/// Induced matrix 1-norm: the largest absolute column sum.
pub fn induced_one_norm(a: &Array2<f64>) -> f64 {
    a.columns()
        .into_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn diff_norm(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(FusionError::Dimension(format!("{:?} against {:?}", a.dim(), b.dim())));
    }
    Ok(induced_one_norm(&(a - b)))
}

/// `(1/M) Σ_m ‖Γ_m − Γ̂_m‖₁` in the induced 1-norm. Estimates must already be
/// aligned to the true class order.
pub fn confusion_error(truth: &[ConfusionMatrix], estimate: &[ConfusionMatrix]) -> Result<f64> {
    if truth.len() != estimate.len() || truth.is_empty() {
        return Err(FusionError::Dimension(format!(
            "{} true confusion matrices against {} estimates",
            truth.len(),
            estimate.len()
        )));
    }
    let mut total = 0.0;
    for (g, h) in truth.iter().zip(estimate) {
        total += diff_norm(g.as_array(), h.as_array())?;
    }
    Ok(total / truth.len() as f64)
}

/// `‖T − T̂‖₁` in the induced 1-norm.
pub fn transition_error(truth: &TransitionMatrix, estimate: &TransitionMatrix) -> Result<f64> {
    diff_norm(truth.as_array(), estimate.as_array())
}

/// Word-level span `(precision, recall)`: precision is the fraction of
/// predicted in-span words that are truly in a span; recall is predicted
/// in-span words over true in-span words, reported raw (it may exceed 1).
pub fn span_metrics(truth: &[bool], pred: &[bool]) -> Result<(f64, f64)> {
    if truth.len() != pred.len() {
        return Err(FusionError::Dimension("span sequences differ in length".into()));
    }
    let predicted = pred.iter().filter(|&&p| p).count();
    let actual = truth.iter().filter(|&&t| t).count();
    let hits = truth.iter().zip(pred).filter(|(&t, &p)| t && p).count();
    Ok((ratio(hits, predicted), ratio(predicted, actual)))
}

/// One metric value with the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRecord {
    pub metric: String,
    pub value: f64,
    pub config_fingerprint: String,
    pub seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn perfect_prediction() {
        let y = [1, 2, 2, 3];
        let pr = precision_recall(&y, &y, 3).unwrap();
        assert!(pr.iter().all(|&(p, r)| p == 1.0 && r == 1.0));
        assert_eq!(macro_fscore(&pr), 1.0);
    }

    #[test]
    fn hand_counted_precision_recall() {
        let pr = precision_recall(&[1, 1, 2, 2], &[1, 2, 2, 2], 2).unwrap();
        assert_eq!(pr, vec![(1.0, 0.5), (2.0 / 3.0, 1.0)]);
        assert!((macro_fscore(&pr) - 11.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn empty_class_conventions() {
        let pr = precision_recall(&[1, 1], &[1, 1], 2).unwrap();
        assert_eq!(pr[1], (0.0, 0.0));
        assert_eq!(macro_fscore(&pr), 0.5);
    }

    #[test]
    fn confusion_error_examples() {
        let i = ConfusionMatrix::identity(2);
        assert_eq!(confusion_error(std::slice::from_ref(&i), std::slice::from_ref(&i)).unwrap(), 0.0);
        let h = ConfusionMatrix::new(array![[0.9, 0.1], [0.1, 0.9]]).unwrap();
        assert!((confusion_error(std::slice::from_ref(&i), &[h]).unwrap() - 0.2).abs() < 1e-15);
        let swapped = ConfusionMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(confusion_error(&[i], &[swapped]).unwrap(), 2.0);
    }

    #[test]
    fn transition_error_examples() {
        let t = TransitionMatrix::new(array![[0.9, 0.2], [0.1, 0.8]]).unwrap();
        assert_eq!(transition_error(&t, &t).unwrap(), 0.0);
        let s = TransitionMatrix::new(array![[0.2, 0.9], [0.8, 0.1]]).unwrap();
        assert!((transition_error(&t, &s).unwrap() - 1.4).abs() < 1e-15);
        assert!(transition_error(&t, &TransitionMatrix::identity(3)).is_err());
    }

    #[test]
    fn span_examples() {
        let t = [false, true, true, true, true, false, false, false];
        assert_eq!(span_metrics(&t, &t).unwrap(), (1.0, 1.0));
        let p = [false, false, true, true, false, false, false, false];
        assert_eq!(span_metrics(&t, &p).unwrap(), (1.0, 0.5));
        let t = [false, false, true, true, true, true, false, false];
        let p = [true; 8];
        assert_eq!(span_metrics(&t, &p).unwrap(), (0.5, 2.0));
        assert_eq!(span_metrics(&[false], &[false]).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn sequence_average() {
        let part = SequencePartition::uniform(2, 2).unwrap();
        let f = sequence_fscore(&[1, 2, 1, 2], &[1, 2, 2, 2], 2, &part).unwrap();
        let second = fscore(&[1, 2], &[2, 2], 2).unwrap();
        assert!((f - (1.0 + second) / 2.0).abs() < 1e-15);
    }

    fn labels(k: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        proptest::collection::vec((1..=k, 1..=k), 1..60).prop_map(|v| v.into_iter().unzip())
    }

    proptest! {
        #[test]
        fn fscore_in_unit_interval((t, p) in labels(4)) {
            let f = fscore(&t, &p, 4).unwrap();
            prop_assert!((0.0..=1.0).contains(&f));
        }

        #[test]
        fn relabeling_invariance((t, p) in labels(3), shift in 1usize..3) {
            let rel = |v: &[usize]| v.iter().map(|&l| (l - 1 + shift) % 3 + 1).collect::<Vec<_>>();
            let a = fscore(&t, &p, 3).unwrap();
            let b = fscore(&rel(&t), &rel(&p), 3).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn confusion_error_bounded(vals in proptest::collection::vec(0.01f64..1.0, 18)) {
            let g = ConfusionMatrix::normalized(Array2::from_shape_vec((3, 3), vals[..9].to_vec()).unwrap()).unwrap();
            let h = ConfusionMatrix::normalized(Array2::from_shape_vec((3, 3), vals[9..].to_vec()).unwrap()).unwrap();
            prop_assert!(confusion_error(&[g], &[h]).unwrap() <= 2.0 + 1e-12);
        }
    }
}
