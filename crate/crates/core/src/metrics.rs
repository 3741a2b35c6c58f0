//! Confusion-matrix bookkeeping, accuracy/sensitivity/specificity, and the
//! timing comparison used by the benchmark tables. Positive class is AD (1).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("truth and prediction lengths differ: {truth} vs {pred}")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("no predictions to score")]
    EmptyInput,
    #[error("label {0} outside {{0, 1}}")]
    BadLabel(u8),
    #[error("baseline duration must be positive, got {0}")]
    NonPositiveBaseline(f64),
}

/// Binary confusion counts with AD (label 1) as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub true_pos: u64,
    pub false_neg: u64,
    pub false_pos: u64,
    pub true_neg: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_neg + self.false_pos + self.true_neg
    }

    /// The same counts under the opposite positive-class convention.
    pub fn swapped_convention(&self) -> ConfusionMatrix {
        ConfusionMatrix {
            true_pos: self.true_neg,
            false_neg: self.false_pos,
            false_pos: self.false_neg,
            true_neg: self.true_pos,
        }
    }
}

/// Metric values derived from a confusion matrix. Sensitivity and
/// specificity are `None` when their denominator is zero; they are never
/// silently reported as 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

/// Counts prediction outcomes against ground truth.
pub fn confusion_from_predictions(
    truth: &[u8],
    pred: &[u8],
) -> Result<ConfusionMatrix, MetricsError> {
    if truth.len() != pred.len() {
        return Err(MetricsError::LengthMismatch { truth: truth.len(), pred: pred.len() });
    }
    if truth.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in truth.iter().zip(pred) {
        if t > 1 {
            return Err(MetricsError::BadLabel(t));
        }
        if p > 1 {
            return Err(MetricsError::BadLabel(p));
        }
        match (t, p) {
            (1, 1) => cm.true_pos += 1,
            (1, 0) => cm.false_neg += 1,
            (0, 1) => cm.false_pos += 1,
            (0, 0) => cm.true_neg += 1,
            _ => unreachable!(),
        }
    }
    Ok(cm)
}

/// accuracy = (tp+tn)/total, sensitivity = tp/(tp+fn),
/// specificity = tn/(tn+fp).
pub fn metrics_from_cm(cm: &ConfusionMatrix) -> Result<ClassificationMetrics, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let pos = cm.true_pos + cm.false_neg;
    let neg = cm.true_neg + cm.false_pos;
    Ok(ClassificationMetrics {
        accuracy: (cm.true_pos + cm.true_neg) as f64 / total as f64,
        sensitivity: (pos > 0).then(|| cm.true_pos as f64 / pos as f64),
        specificity: (neg > 0).then(|| cm.true_neg as f64 / neg as f64),
    })
}

/// `(before - after) / before * 100`.
pub fn percentage_decrease(before: f64, after: f64) -> Result<f64, MetricsError> {
    if before <= 0.0 {
        return Err(MetricsError::NonPositiveBaseline(before));
    }
    Ok((before - after) / before * 100.0)
}

/// A labeled wall-clock duration from a monotonic clock.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingRecord {
    pub label: String,
    pub seconds: f64,
}

impl TimingRecord {
    pub fn new(label: impl Into<String>, seconds: f64) -> Self {
        let seconds = seconds.max(0.0);
        TimingRecord { label: label.into(), seconds }
    }
}
