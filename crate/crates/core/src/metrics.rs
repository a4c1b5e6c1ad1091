//! Confusion matrix, precision/recall/F1/accuracy and the ROC curve.
//!
//! The positive class is always label 1 (anomaly).

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::Label;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("predictions ({0}) and truth ({1}) differ in length")]
    LengthMismatch(usize, usize),
    #[error("cannot evaluate zero rows")]
    Empty,
    #[error("entry {index} is {value}, not 0 or 1")]
    NonBinary { index: usize, value: u8 },
    #[error("ROC needs both classes; only class {0} is present")]
    SingleClass(u8),
    #[error("score at index {0} is NaN")]
    NanScore(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn correct(&self) -> u64 {
        self.tp + self.tn
    }

    /// Two-row text rendering, actual class down the side.
    pub fn render(&self) -> String {
        let w = [self.tp, self.tn, self.fp, self.fn_]
            .iter()
            .map(|v| v.to_string().len())
            .max()
            .unwrap_or(1)
            .max("pred 0".len());
        format!(
            "{:>10}  {:>w$}  {:>w$}\n{:>10}  {:>w$}  {:>w$}\n{:>10}  {:>w$}  {:>w$}\n",
            "", "pred 0", "pred 1", "actual 0", self.tn, self.fp, "actual 1", self.fn_, self.tp,
        )
    }
}

fn check_binary(values: &[Label]) -> Result<(), MetricsError> {
    match values.iter().position(|&v| v > 1) {
        Some(index) => Err(MetricsError::NonBinary {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

pub fn confusion(pred: &[Label], truth: &[Label]) -> Result<ConfusionMatrix, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    check_binary(pred)?;
    check_binary(truth)?;
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (1, 1) => cm.tp += 1,
            (0, 0) => cm.tn += 1,
            (1, 0) => cm.fp += 1,
            _ => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Positive-class metrics. Any ratio with a zero denominator is reported as 0.
pub fn metric_set(cm: &ConfusionMatrix) -> MetricSet {
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    MetricSet {
        precision,
        recall,
        f1,
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Rows scoring at least this much are predicted positive. The first
    /// point uses `+inf`.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    /// `fpr,tpr,threshold` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["fpr", "tpr", "threshold"])?;
        for p in &self.points {
            wtr.write_record([p.fpr.to_string(), p.tpr.to_string(), p.threshold.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Threshold sweep over distinct scores, highest first. Rows sharing a score
/// move together, so a tie contributes one diagonal segment and the
/// trapezoidal area equals the pair-counting AUC.
pub fn roc(scores: &[f64], truth: &[Label]) -> Result<RocCurve, MetricsError> {
    if scores.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(scores.len(), truth.len()));
    }
    check_binary(truth)?;
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(MetricsError::NanScore(i));
    }
    let positives = truth.iter().filter(|&&t| t == 1).count() as u64;
    let negatives = truth.len() as u64 - positives;
    if positives == 0 {
        return Err(MetricsError::SingleClass(0));
    }
    if negatives == 0 {
        return Err(MetricsError::SingleClass(1));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        let (prev_tp, prev_fp) = (tp, fp);
        while i < order.len() && scores[order[i]] == threshold {
            if truth[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        // Trapezoid in count space, normalized once at the end.
        auc += (fp - prev_fp) as f64 * (tp + prev_tp) as f64 / 2.0;
        points.push(RocPoint {
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
            threshold,
        });
    }
    Ok(RocCurve {
        points,
        auc: auc / (positives as f64 * negatives as f64),
    })
}

/// Confusion counts with metrics recomputed on demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub auc: f64,
}

impl Evaluation {
    pub fn metrics(&self) -> MetricSet {
        metric_set(&self.confusion)
    }
}

impl fmt::Display for MetricSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "precision {:.4}  recall {:.4}  f1 {:.4}  accuracy {:.4}",
            self.precision, self.recall, self.f1, self.accuracy
        )
    }
}
