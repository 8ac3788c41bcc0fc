use serde::{Deserialize, Serialize};

use super::SelectionError;
use crate::cohort::Sample;
use crate::glm::FittedModel;
use crate::metrics::{self, confusion_at_threshold};

/// Probabilities and labels of one scored dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSet {
    pub name: String,
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl ScoredSet {
    pub fn from_samples(name: impl Into<String>, model: &FittedModel, samples: &[Sample]) -> Self {
        ScoredSet {
            name: name.into(),
            scores: samples.iter().map(|s| model.score(&s.biomarkers).probability).collect(),
            labels: samples.iter().map(|s| s.outcome.code()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdObjective {
    Accuracy,
    F1Positive,
}

impl std::str::FromStr for ThresholdObjective {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "accuracy" => Ok(ThresholdObjective::Accuracy),
            "f1_positive" | "f1" => Ok(ThresholdObjective::F1Positive),
            other => Err(format!("unknown objective `{other}` (expected accuracy or f1_positive)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdTuning {
    pub threshold: f64,
    pub objective: ThresholdObjective,
    pub value: f64,
    /// `(threshold, summed objective)` for every grid point, ascending.
    pub curve: Vec<(f64, f64)>,
}

/// 0.05, 0.10, …, 0.95.
pub fn default_grid() -> Vec<f64> {
    (1..=19).map(|i| f64::from(i) / 20.0).collect()
}

/// Grid search for the threshold maximizing the objective summed over
/// `sets`. Ties go to the larger threshold. An undefined f1 counts as 0.
pub fn tune_threshold(
    sets: &[ScoredSet],
    objective: ThresholdObjective,
    grid: &[f64],
) -> Result<ThresholdTuning, SelectionError> {
    if grid.is_empty() {
        return Err(SelectionError::Parameter("threshold grid is empty".into()));
    }
    if sets.is_empty() {
        return Err(SelectionError::Parameter("no scored datasets".into()));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let mut curve = Vec::with_capacity(grid.len());
    for &t in &grid {
        let mut total = 0.0;
        for s in sets {
            let cm = confusion_at_threshold(&s.scores, &s.labels, t)?;
            total += match objective {
                ThresholdObjective::Accuracy => metrics::accuracy(&cm)?,
                ThresholdObjective::F1Positive => metrics::f1_positive(&cm).unwrap_or(0.0),
            };
        }
        curve.push((t, total));
    }
    let (threshold, value) =
        curve.iter().copied().reduce(|best, c| if c.1 >= best.1 { c } else { best }).expect("grid is non-empty");
    Ok(ThresholdTuning { threshold, objective, value, curve })
}
