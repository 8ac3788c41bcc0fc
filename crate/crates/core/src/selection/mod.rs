//! Repeated k-fold cross-validation with random hyperparameter search,
//! median coefficient aggregation and decision-threshold tuning.

mod cv;
mod threshold;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureSet;
use crate::glm::{FittedModel, GlmError, PenaltyKind, PenaltySpec};
use crate::metrics::MetricError;
use crate::rng;

pub use cv::{
    random_search_cv, table1_experiment, write_table1_csv, AucSummary, ConvergenceCensus, CvCell, CvReport, DrawResult,
    Table1Row,
};
pub use threshold::{default_grid, tune_threshold, ScoredSet, ThresholdObjective, ThresholdTuning};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("shape error: coefficient vector {index} has {got} values, expected {expected}")]
    Shape { index: usize, expected: usize, got: usize },
    #[error("round {round}, fold {fold}: {source}")]
    Fit { round: usize, fold: usize, source: GlmError },
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub const C_MIN: f64 = 1e-4;
pub const C_MAX: f64 = 1e3;
pub const DEFAULT_DRAWS_PER_FOLD: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub folds: usize,
    pub rounds: usize,
    pub seed: u64,
    pub stratified: bool,
}

impl CvPlan {
    pub fn new(folds: usize, rounds: usize, seed: u64, stratified: bool) -> Result<Self, SelectionError> {
        if folds < 2 {
            return Err(SelectionError::Plan(format!("folds must be at least 2, got {folds}")));
        }
        if rounds < 1 {
            return Err(SelectionError::Plan("rounds must be at least 1".into()));
        }
        Ok(CvPlan { folds, rounds, seed, stratified })
    }

    /// Five folds, 100 rounds, stratified.
    pub fn standard(seed: u64) -> Self {
        CvPlan { folds: 5, rounds: 100, seed, stratified: true }
    }

    pub fn cells(&self) -> usize {
        self.folds * self.rounds
    }
}

/// Indices of one fold, each list ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Partition `0..labels.len()` into `plan.folds` folds for one round.
///
/// Indices are shuffled (per class when stratified, classes concatenated)
/// and dealt round-robin, so the first `n % folds` folds get one extra.
pub fn kfold_split(labels: &[u8], plan: &CvPlan, round: usize) -> Result<Vec<Fold>, SelectionError> {
    let n = labels.len();
    if n < plan.folds {
        return Err(SelectionError::Plan(format!("{n} samples cannot fill {} folds", plan.folds)));
    }
    let mut rng = rng::stream(plan.seed, rng::TAG_FOLDS, round as u32, 0);
    let order: Vec<usize> = if plan.stratified {
        let mut neg: Vec<usize> = (0..n).filter(|&i| labels[i] == 0).collect();
        let mut pos: Vec<usize> = (0..n).filter(|&i| labels[i] != 0).collect();
        neg.shuffle(&mut rng);
        pos.shuffle(&mut rng);
        neg.into_iter().chain(pos).collect()
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        all
    };
    let mut validation = vec![Vec::new(); plan.folds];
    for (j, i) in order.into_iter().enumerate() {
        validation[j % plan.folds].push(i);
    }
    Ok(validation
        .into_iter()
        .map(|mut v| {
            v.sort_unstable();
            let mut in_val = vec![false; n];
            v.iter().for_each(|&i| in_val[i] = true);
            Fold { train: (0..n).filter(|&i| !in_val[i]).collect(), validation: v }
        })
        .collect())
}

/// One random-search draw: penalty kind chosen uniformly, `c` log-uniform
/// on `[C_MIN, C_MAX]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperDraw {
    pub penalty: PenaltySpec,
}

impl HyperDraw {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let kind = if rng.random::<bool>() { PenaltyKind::L1 } else { PenaltyKind::L2 };
        let log_c = rng.random_range(C_MIN.ln()..=C_MAX.ln());
        let c = log_c.exp().clamp(C_MIN, C_MAX);
        HyperDraw { penalty: PenaltySpec { kind, c } }
    }
}

/// The draws for one (round, fold) cell, reproducible from the master seed.
pub fn cell_draws(plan: &CvPlan, round: usize, fold: usize, count: usize) -> Vec<HyperDraw> {
    let mut rng = rng::stream(plan.seed, rng::TAG_DRAWS, round as u32, fold as u16);
    (0..count).map(|_| HyperDraw::sample(&mut rng)).collect()
}

/// Elementwise median; an even count takes the midpoint of the two central
/// order statistics.
pub fn median_coefficients(vectors: &[Vec<f64>]) -> Result<Vec<f64>, SelectionError> {
    let first = vectors.first().ok_or_else(|| SelectionError::Parameter("no coefficient vectors".into()))?;
    let k = first.len();
    if let Some((index, v)) = vectors.iter().enumerate().find(|(_, v)| v.len() != k) {
        return Err(SelectionError::Shape { index, expected: k, got: v.len() });
    }
    Ok((0..k)
        .map(|j| {
            let mut col: Vec<f64> = vectors.iter().map(|v| v[j]).collect();
            col.sort_by(f64::total_cmp);
            let m = col.len();
            if m % 2 == 1 {
                col[m / 2]
            } else {
                0.5 * (col[m / 2 - 1] + col[m / 2])
            }
        })
        .collect())
}

/// Median model over the feature set, with the default threshold 0.5.
pub fn aggregate_median_model(vectors: &[Vec<f64>], feature_set: &FeatureSet) -> Result<FittedModel, SelectionError> {
    let coefs = median_coefficients(vectors)?;
    if coefs.len() != feature_set.len() + 1 {
        return Err(SelectionError::Shape { index: 0, expected: feature_set.len() + 1, got: coefs.len() });
    }
    let provenance = format!("elementwise median of {} cross-validated fits", vectors.len());
    Ok(FittedModel::new(feature_set.clone(), coefs, 0.5, provenance)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sizes(folds: &[Fold]) -> Vec<usize> {
        folds.iter().map(|f| f.validation.len()).collect()
    }

    #[test]
    fn fold_sizes() {
        let plan = CvPlan::new(5, 1, 3, false).unwrap();
        assert_eq!(sizes(&kfold_split(&[0; 10], &plan, 0).unwrap()), vec![2; 5]);
        let y: Vec<u8> = (0..11).map(|i| (i % 3 == 0) as u8).collect();
        assert_eq!(sizes(&kfold_split(&y, &plan, 0).unwrap()), vec![3, 2, 2, 2, 2]);
        let strat = CvPlan { stratified: true, ..plan };
        assert_eq!(sizes(&kfold_split(&y, &strat, 0).unwrap()), vec![3, 2, 2, 2, 2]);
        assert!(kfold_split(&[0, 1, 0], &plan, 0).is_err());
    }

    #[test]
    fn folds_partition_and_repeat() {
        let y: Vec<u8> = (0..37).map(|i| (i % 4 == 0) as u8).collect();
        let plan = CvPlan::standard(11);
        let a = kfold_split(&y, &plan, 4).unwrap();
        assert_eq!(a, kfold_split(&y, &plan, 4).unwrap());
        assert_ne!(a, kfold_split(&y, &plan, 5).unwrap());
        let mut all: Vec<usize> = a.iter().flat_map(|f| f.validation.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
        for f in &a {
            assert_eq!(f.train.len() + f.validation.len(), 37);
            assert!(f.train.iter().all(|i| !f.validation.contains(i)));
            // 10 positives over 5 folds
            assert_eq!(f.validation.iter().filter(|&&i| y[i] == 1).count(), 2);
        }
    }

    #[test]
    fn draws_stay_in_range() {
        let plan = CvPlan::standard(1);
        let draws = cell_draws(&plan, 0, 0, 2000);
        assert!(draws.iter().all(|d| (C_MIN..=C_MAX).contains(&d.penalty.c)));
        let l1 = draws.iter().filter(|d| d.penalty.kind == PenaltyKind::L1).count();
        assert!((900..1100).contains(&l1));
        let below_one = draws.iter().filter(|d| d.penalty.c < 1.0).count();
        // log-uniform: 4 of 7 decades lie below 1
        assert!((1050..1250).contains(&below_one));
        assert_eq!(draws[..5], cell_draws(&plan, 0, 0, 5)[..]);
        assert_ne!(cell_draws(&plan, 0, 1, 5), cell_draws(&plan, 0, 0, 5));
    }

    #[test]
    fn median_examples() {
        let odd = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        assert_eq!(median_coefficients(&odd).unwrap(), vec![3.0, 4.0]);
        let even = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert_eq!(median_coefficients(&even).unwrap(), vec![2.0, 3.0]);
        let same = vec![vec![0.25, -1.5, 7.0]; 500];
        assert_eq!(median_coefficients(&same).unwrap(), vec![0.25, -1.5, 7.0]);
        let bad = vec![vec![1.0], vec![1.0, 2.0]];
        assert!(matches!(median_coefficients(&bad), Err(SelectionError::Shape { index: 1, .. })));
    }
}
