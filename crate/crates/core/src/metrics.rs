//! Classification metrics: ROC/AUC with half credit for ties, confusion
//! matrices at a strict threshold, accuracy and f1.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("undefined metric: {0}")]
    Undefined(&'static str),
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    Length { scores: usize, labels: usize },
    #[error("label {0} is not binary")]
    NonBinaryLabel(u8),
    #[error("score {0} is not finite")]
    NonFinite(f64),
    #[error("threshold {0} must lie strictly between 0 and 1")]
    Threshold(f64),
}

fn check(scores: &[f64], labels: &[u8]) -> Result<(), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::Length { scores: scores.len(), labels: labels.len() });
    }
    if let Some(&y) = labels.iter().find(|&&y| y > 1) {
        return Err(MetricError::NonBinaryLabel(y));
    }
    if let Some(&s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite(s));
    }
    Ok(())
}

/// Area under the ROC curve via one sorted sweep.
///
/// Pair counts are kept as integers (a win counts 2, a tie 1) so the result
/// is exactly `(wins + ties/2) / (pos·neg)` with a single final division.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64, MetricError> {
    check(scores, labels)?;
    let pos = labels.iter().filter(|&&y| y == 1).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricError::Undefined("AUC needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut doubled: u128 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut q) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                p += 1;
            } else {
                q += 1;
            }
            j += 1;
        }
        doubled += u128::from(p) * (2 * u128::from(neg_below) + u128::from(q));
        neg_below += q;
        i = j;
    }
    Ok(doubled as f64 / (2 * u128::from(pos) * u128::from(neg)) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC points from the strictest threshold down. The first point is (0,0)
/// at `+inf`, the last is (1,1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    /// Trapezoidal area; equals [`roc_auc`] up to rounding.
    pub fn area(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum()
    }
}

pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<RocCurve, MetricError> {
    check(scores, labels)?;
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricError::Undefined("ROC curve needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint { threshold: s, fpr: fp as f64 / neg as f64, tpr: tp as f64 / pos as f64 });
    }
    Ok(RocCurve { points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionMatrix { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, predicted_death: bool, death: bool) {
        match (predicted_death, death) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = ConfusionMatrix;
    fn add(self, o: ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix::new(self.tp + o.tp, self.fp + o.fp, self.tn + o.tn, self.fn_ + o.fn_)
    }
}

/// Death is predicted iff `score > threshold`.
pub fn confusion_at_threshold(scores: &[f64], labels: &[u8], threshold: f64) -> Result<ConfusionMatrix, MetricError> {
    check(scores, labels)?;
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(MetricError::Threshold(threshold));
    }
    let mut cm = ConfusionMatrix::default();
    for (&s, &y) in scores.iter().zip(labels) {
        cm.add(s > threshold, y == 1);
    }
    Ok(cm)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, MetricError> {
    match cm.total() {
        0 => Err(MetricError::Undefined("accuracy of an empty matrix")),
        n => Ok((cm.tp + cm.tn) as f64 / n as f64),
    }
}

/// `2tp / (2tp + fp + fn)` for the death class.
pub fn f1_positive(cm: &ConfusionMatrix) -> Result<f64, MetricError> {
    match 2 * cm.tp + cm.fp + cm.fn_ {
        0 => Err(MetricError::Undefined("f1 with no positives predicted or present")),
        d => Ok((2 * cm.tp) as f64 / d as f64),
    }
}

/// Micro-averaged f1 over the two one-vs-rest classes. Each error is a false
/// positive for one class and a false negative for the other, so this is
/// numerically the accuracy.
pub fn f1_micro(cm: &ConfusionMatrix) -> Result<f64, MetricError> {
    if cm.total() == 0 {
        return Err(MetricError::Undefined("f1 of an empty matrix"));
    }
    let tp = cm.tp + cm.tn;
    let fp = cm.fp + cm.fn_;
    let fn_ = cm.fn_ + cm.fp;
    Ok((2 * tp) as f64 / (2 * tp + fp + fn_) as f64)
}

/// Rounded half away from zero to two decimals, as a percentage string.
pub fn percent(v: f64) -> String {
    format!("{:.2}", (v * 10_000.0).round() / 100.0)
}

/// The full metric set for one scored cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub n: usize,
    pub threshold: f64,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub f1_positive: Option<f64>,
    pub f1_micro: f64,
    /// Absent when only one class is present.
    pub auc: Option<f64>,
}

pub fn evaluate(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Evaluation, MetricError> {
    let confusion = confusion_at_threshold(scores, labels, threshold)?;
    Ok(Evaluation {
        n: scores.len(),
        threshold,
        accuracy: accuracy(&confusion)?,
        f1_positive: f1_positive(&confusion).ok(),
        f1_micro: f1_micro(&confusion)?,
        auc: roc_auc(scores, labels).ok(),
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub cohort: String,
    pub metric: String,
    pub value: f64,
    pub threshold: f64,
    pub n: usize,
}

impl Evaluation {
    pub fn rows(&self, cohort: &str) -> Vec<MetricRow> {
        let c = &self.confusion;
        let mut named: Vec<(&str, Option<f64>)> = vec![
            ("tp", Some(c.tp as f64)),
            ("fp", Some(c.fp as f64)),
            ("tn", Some(c.tn as f64)),
            ("fn", Some(c.fn_ as f64)),
            ("accuracy", Some(self.accuracy)),
            ("f1_positive", self.f1_positive),
            ("f1_micro", Some(self.f1_micro)),
        ];
        named.push(("auc", self.auc));
        named
            .into_iter()
            .filter_map(|(m, v)| {
                v.map(|value| MetricRow {
                    cohort: cohort.to_string(),
                    metric: m.to_string(),
                    value,
                    threshold: self.threshold,
                    n: self.n,
                })
            })
            .collect()
    }
}

pub fn write_metric_rows<W: Write>(rows: &[MetricRow], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
