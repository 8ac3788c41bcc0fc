//! Multi-day-ahead forecasting evaluation over daily records.
//!
//! Every daily record is scored on its own. Per patient, the trailing run of
//! records whose predictions all match the final outcome tells how many days
//! before the outcome the model had already settled on the right answer.

use std::io::Write;

use chrono::NaiveDateTime;
use serde::Serialize;
use thiserror::Error;

use crate::cohort::{CohortDataset, Outcome, OutcomeTime};
use crate::features::{expand_biomarkers, FeatureVector};
use crate::glm::FittedModel;
use crate::metrics::{self, ConfusionMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForecastError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DailySample {
    pub patient_id: String,
    pub recorded_at: NaiveDateTime,
    pub features: Vec<f64>,
    pub probability: f64,
    pub predicted: Outcome,
    pub truth: Outcome,
    pub outcome_time: OutcomeTime,
    pub days_to_outcome: f64,
}

impl DailySample {
    pub fn correct(&self) -> bool {
        self.predicted == self.truth
    }

    pub fn feature_vector(&self) -> FeatureVector {
        FeatureVector::new(self.features.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcludedRecord {
    pub patient_id: String,
    pub recorded_at: NaiveDateTime,
    /// Present for records dated after the outcome.
    pub days_to_outcome: Option<f64>,
}

/// Included samples in cohort order plus everything left out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DailySamples {
    pub samples: Vec<DailySample>,
    pub negative_days: Vec<ExcludedRecord>,
    pub incomplete: Vec<ExcludedRecord>,
}

impl DailySamples {
    pub fn total_records(&self) -> usize {
        self.samples.len() + self.negative_days.len() + self.incomplete.len()
    }
}

/// Score every record of a daily-aggregated cohort. Records dated after the
/// outcome are set aside and counted, as are incomplete ones (absent after
/// aggregation).
pub fn build_daily_samples(cohort: &CohortDataset, model: &FittedModel) -> DailySamples {
    let mut out = DailySamples { samples: Vec::new(), negative_days: Vec::new(), incomplete: Vec::new() };
    for p in cohort.patients() {
        for r in &p.records {
            let Some(markers) = r.biomarkers() else {
                out.incomplete.push(ExcludedRecord {
                    patient_id: p.patient_id.clone(),
                    recorded_at: r.recorded_at,
                    days_to_outcome: None,
                });
                continue;
            };
            let days = p.outcome_time.days_after(r.recorded_at);
            if days < 0.0 {
                out.negative_days.push(ExcludedRecord {
                    patient_id: p.patient_id.clone(),
                    recorded_at: r.recorded_at,
                    days_to_outcome: Some(days),
                });
                continue;
            }
            let score = model.score(&markers);
            out.samples.push(DailySample {
                patient_id: p.patient_id.clone(),
                recorded_at: r.recorded_at,
                features: expand_biomarkers(&markers, model.feature_set()).values().to_vec(),
                probability: score.probability,
                predicted: score.outcome,
                truth: p.outcome,
                outcome_time: p.outcome_time,
                days_to_outcome: days,
            });
        }
    }
    out
}

/// Length of the trailing run of correct predictions and the index where
/// it starts (`None` when the final prediction is wrong or there are no
/// records).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Suffix {
    pub len: usize,
    pub start: Option<usize>,
}

pub fn consistent_suffix(predictions: &[Outcome], truth: Outcome) -> Suffix {
    let len = predictions.iter().rev().take_while(|&&p| p == truth).count();
    Suffix { len, start: (len > 0).then(|| predictions.len() - len) }
}

/// `m`: days from the earliest record of the correct suffix to the outcome
/// (absent when the suffix is empty). `M`: days from the first record.
pub fn days_ahead(times: &[NaiveDateTime], suffix: Suffix, outcome: OutcomeTime) -> (Option<f64>, Option<f64>) {
    let m = suffix.start.map(|i| outcome.days_after(times[i]));
    let max = times.first().map(|&t| outcome.days_after(t));
    (m, max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatientForecast {
    pub patient_id: String,
    pub outcome: Outcome,
    pub n_records: usize,
    pub n_consistent: usize,
    pub suffix_start: Option<NaiveDateTime>,
    pub days_ahead: Option<f64>,
    pub max_possible_days: Option<f64>,
}

/// Per-patient summaries over included samples, in order of first
/// appearance. Samples of one patient must be contiguous and chronological,
/// as [`build_daily_samples`] produces them.
pub fn patient_forecasts(samples: &[DailySample]) -> Vec<PatientForecast> {
    samples
        .chunk_by(|a, b| a.patient_id == b.patient_id)
        .map(|group| {
            let first = &group[0];
            let preds: Vec<Outcome> = group.iter().map(|s| s.predicted).collect();
            let times: Vec<NaiveDateTime> = group.iter().map(|s| s.recorded_at).collect();
            let suffix = consistent_suffix(&preds, first.truth);
            let (m, max) = days_ahead(&times, suffix, first.outcome_time);
            PatientForecast {
                patient_id: first.patient_id.clone(),
                outcome: first.truth,
                n_records: group.len(),
                n_consistent: suffix.len,
                suffix_start: suffix.start.map(|i| times[i]),
                days_ahead: m,
                max_possible_days: max,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonBucket {
    /// `floor(days_to_outcome)`.
    pub horizon_day: i64,
    pub n: usize,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
    /// Over all samples with `days_to_outcome < horizon_day + 1`, i.e. every
    /// bucket up to and including this one.
    pub cum_n: usize,
    pub cum_f1: Option<f64>,
    pub cum_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonMetrics {
    /// Contiguous from day 0 to the largest day present; empty days have
    /// `n = 0` and no per-day metrics.
    pub buckets: Vec<HorizonBucket>,
    pub n: usize,
    pub confusion: ConfusionMatrix,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
}

/// Per-day and cumulative metrics. "f1" here is the death-class f1; it is
/// absent where undefined (no deaths predicted or present).
pub fn horizon_metrics(samples: &[DailySample]) -> HorizonMetrics {
    let day = |s: &DailySample| s.days_to_outcome.floor() as i64;
    let max_day = samples.iter().map(day).max();
    let mut per_day = vec![ConfusionMatrix::default(); max_day.map_or(0, |d| d as usize + 1)];
    for s in samples {
        if let Ok(d) = usize::try_from(day(s)) {
            per_day[d].add(s.predicted.is_death(), s.truth.is_death());
        }
    }
    let mut cum = ConfusionMatrix::default();
    let buckets = per_day
        .iter()
        .enumerate()
        .map(|(d, cm)| {
            cum = cum + *cm;
            HorizonBucket {
                horizon_day: d as i64,
                n: cm.total() as usize,
                f1: metrics::f1_positive(cm).ok(),
                accuracy: metrics::accuracy(cm).ok(),
                cum_n: cum.total() as usize,
                cum_f1: metrics::f1_positive(&cum).ok(),
                cum_accuracy: metrics::accuracy(&cum).ok(),
            }
        })
        .collect();
    HorizonMetrics {
        buckets,
        n: cum.total() as usize,
        confusion: cum,
        accuracy: metrics::accuracy(&cum).ok(),
        f1: metrics::f1_positive(&cum).ok(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub bin_start: f64,
    pub bin_end: f64,
    pub count: usize,
}

/// Right-open bins `[k·w, (k+1)·w)` from 0 up to the bin holding the largest
/// value, empty bins included.
pub fn histogram_bins(values: &[f64], width: f64) -> Result<Vec<HistogramBin>, ForecastError> {
    if !(width.is_finite() && width > 0.0) {
        return Err(ForecastError::Parameter(format!("bin width must be > 0, got {width}")));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(ForecastError::Parameter(format!("histogram value {v} is not a nonnegative number")));
    }
    let index = |v: f64| (v / width).floor() as usize;
    let Some(top) = values.iter().map(|&v| index(v)).max() else {
        return Ok(Vec::new());
    };
    let mut counts = vec![0usize; top + 1];
    values.iter().for_each(|&v| counts[index(v)] += 1);
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramBin { bin_start: k as f64 * width, bin_end: (k + 1) as f64 * width, count })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonReport {
    pub cohort: String,
    pub threshold: f64,
    pub total_records: usize,
    pub included: usize,
    pub excluded_negative_days: Vec<ExcludedRecord>,
    pub excluded_incomplete: usize,
    pub metrics: HorizonMetrics,
    pub patients: Vec<PatientForecast>,
    /// Patients whose final prediction is right (n_i ≥ 1).
    pub patients_correct: usize,
    pub mean_days_ahead: Option<f64>,
    pub max_days_ahead: Option<f64>,
    pub histogram_bin_width: f64,
    pub histogram: Vec<HistogramBin>,
}

pub fn evaluate_forecast(
    cohort: &CohortDataset,
    model: &FittedModel,
    bin_width: f64,
) -> Result<HorizonReport, ForecastError> {
    let daily = build_daily_samples(cohort, model);
    let patients = patient_forecasts(&daily.samples);
    let lead: Vec<f64> = patients.iter().filter_map(|p| p.days_ahead).collect();
    let histogram = histogram_bins(&lead, bin_width)?;
    Ok(HorizonReport {
        cohort: cohort.label.clone(),
        threshold: model.threshold(),
        total_records: daily.total_records(),
        included: daily.samples.len(),
        excluded_incomplete: daily.incomplete.len(),
        metrics: horizon_metrics(&daily.samples),
        patients_correct: lead.len(),
        mean_days_ahead: (!lead.is_empty()).then(|| lead.iter().sum::<f64>() / lead.len() as f64),
        max_days_ahead: lead.iter().copied().reduce(f64::max),
        histogram_bin_width: bin_width,
        histogram,
        patients,
        excluded_negative_days: daily.negative_days,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `horizon_day,n,f1,accuracy,cum_f1,cum_accuracy`; undefined metrics are
/// empty fields.
pub fn write_horizon_csv<W: Write>(metrics: &HorizonMetrics, writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["horizon_day", "n", "f1", "accuracy", "cum_f1", "cum_accuracy"])?;
    for b in &metrics.buckets {
        w.write_record([
            b.horizon_day.to_string(),
            b.n.to_string(),
            opt(b.f1),
            opt(b.accuracy),
            opt(b.cum_f1),
            opt(b.cum_accuracy),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram_csv<W: Write>(bins: &[HistogramBin], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["bin_start", "bin_end", "count"])?;
    for b in bins {
        w.write_record([b.bin_start.to_string(), b.bin_end.to_string(), b.count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use Outcome::{Death, Survival};

    #[test]
    fn suffix_rule() {
        let s = consistent_suffix(&[Survival, Death, Death], Death);
        assert_eq!(s, Suffix { len: 2, start: Some(1) });
        assert_eq!(consistent_suffix(&[Death, Survival], Death), Suffix { len: 0, start: None });
        assert_eq!(consistent_suffix(&[Death; 4], Death), Suffix { len: 4, start: Some(0) });
        assert_eq!(consistent_suffix(&[], Death), Suffix { len: 0, start: None });
    }

    #[test]
    fn histogram_examples() {
        let h = histogram_bins(&[0.5, 1.5, 1.7], 1.0).unwrap();
        assert_eq!(
            h,
            vec![
                HistogramBin { bin_start: 0.0, bin_end: 1.0, count: 1 },
                HistogramBin { bin_start: 1.0, bin_end: 2.0, count: 2 }
            ]
        );
        assert!(histogram_bins(&[], 1.0).unwrap().is_empty());
        assert_eq!(histogram_bins(&[2.0], 1.0).unwrap().iter().map(|b| b.count).collect::<Vec<_>>(), vec![0, 0, 1]);
        assert!(histogram_bins(&[1.0], 0.0).is_err());
    }
}
