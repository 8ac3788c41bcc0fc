use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::{cell_draws, kfold_split, median_coefficients, CvPlan, Fold, SelectionError};
use crate::cohort::Sample;
use crate::features::FeatureSet;
use crate::glm::{fit, Dataset, FitConfig, FittedModel, GlmError, PenaltySpec};
use crate::metrics::roc_auc;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrawResult {
    pub penalty: PenaltySpec,
    pub converged: bool,
    pub iterations: usize,
    pub train_auc: Option<f64>,
    pub val_auc: Option<f64>,
}

/// Result of one (round, fold) cell: the winning draw's fit plus every
/// draw's scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvCell {
    pub round: usize,
    pub fold: usize,
    /// Index into `draws`.
    pub chosen: usize,
    pub penalty: PenaltySpec,
    pub train_auc: f64,
    pub val_auc: f64,
    pub coefficients: Vec<f64>,
    /// No draw converged; the best non-converged draw was kept.
    pub flagged: bool,
    pub draws: Vec<DrawResult>,
}

/// Mean and sample standard deviation (n − 1) over cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AucSummary {
    pub train_mean: f64,
    pub train_sd: f64,
    pub val_mean: f64,
    pub val_sd: f64,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

impl AucSummary {
    fn of(cells: &[CvCell]) -> Self {
        let (train_mean, train_sd) = mean_sd(&cells.iter().map(|c| c.train_auc).collect::<Vec<_>>());
        let (val_mean, val_sd) = mean_sd(&cells.iter().map(|c| c.val_auc).collect::<Vec<_>>());
        AucSummary { train_mean, train_sd, val_mean, val_sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceCensus {
    pub fits: usize,
    pub converged: usize,
    /// `(round, fold)` of cells where no draw converged.
    pub flagged_cells: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub feature_set: FeatureSet,
    pub plan: CvPlan,
    pub draws_per_fold: usize,
    /// Hyperparameters are picked on the same validation fold that is
    /// reported, so validation AUCs are optimistic.
    pub selection_protocol: &'static str,
    pub summary: AucSummary,
    pub census: ConvergenceCensus,
    /// Ordered by round, then fold.
    pub cells: Vec<CvCell>,
}

impl CvReport {
    pub fn coefficient_vectors(&self) -> Vec<Vec<f64>> {
        self.cells.iter().map(|c| c.coefficients.clone()).collect()
    }

    pub fn median_model(&self) -> Result<FittedModel, SelectionError> {
        let coefs = median_coefficients(&self.coefficient_vectors())?;
        let provenance = format!(
            "elementwise median of {} fits ({} rounds x {} folds, {} draws each, seed {})",
            self.cells.len(),
            self.plan.rounds,
            self.plan.folds,
            self.draws_per_fold,
            self.plan.seed
        );
        Ok(FittedModel::new(self.feature_set.clone(), coefs, 0.5, provenance)?)
    }
}

fn run_cell(
    dataset: &Dataset,
    plan: &CvPlan,
    round: usize,
    fold_index: usize,
    fold: &Fold,
    draws_per_fold: usize,
) -> Result<CvCell, SelectionError> {
    let wrap = |source: GlmError| SelectionError::Fit { round, fold: fold_index, source };
    let train = dataset.subset(&fold.train);
    let val = dataset.subset(&fold.validation);
    let mut draws = Vec::with_capacity(draws_per_fold);
    let mut coefs = Vec::with_capacity(draws_per_fold);
    for draw in cell_draws(plan, round, fold_index, draws_per_fold) {
        let f = fit(&train, &FitConfig::new(draw.penalty)).map_err(wrap)?;
        // AUC only depends on the ranking, so the linear predictor will do.
        let b = f.model.coefficients();
        let train_auc = roc_auc(&train.design.linear_predictor(b).map_err(wrap)?, train.design.labels()).ok();
        let val_auc = roc_auc(&val.design.linear_predictor(b).map_err(wrap)?, val.design.labels()).ok();
        draws.push(DrawResult {
            penalty: draw.penalty,
            converged: f.diagnostics.converged,
            iterations: f.diagnostics.iterations,
            train_auc,
            val_auc,
        });
        coefs.push(b.to_vec());
    }

    let best = |require_converged: bool| {
        let mut top: Option<(usize, f64)> = None;
        for (i, d) in draws.iter().enumerate() {
            if require_converged && !d.converged {
                continue;
            }
            if let Some(v) = d.val_auc {
                if top.is_none_or(|(_, t)| v > t) {
                    top = Some((i, v));
                }
            }
        }
        top
    };
    let (chosen, flagged) = match best(true) {
        Some((i, _)) => (i, false),
        None => match best(false) {
            Some((i, _)) => (i, !draws.iter().any(|d| d.converged)),
            None => {
                return Err(SelectionError::Plan(format!(
                    "round {round}, fold {fold_index}: AUC undefined (a fold holds a single outcome class)"
                )))
            }
        },
    };
    let d = &draws[chosen];
    Ok(CvCell {
        round,
        fold: fold_index,
        chosen,
        penalty: d.penalty,
        train_auc: d
            .train_auc
            .ok_or_else(|| SelectionError::Plan(format!("round {round}, fold {fold_index}: training AUC undefined")))?,
        val_auc: d.val_auc.expect("chosen draw has a validation AUC"),
        coefficients: coefs.swap_remove(chosen),
        flagged,
        draws,
    })
}

/// Run `plan.rounds × plan.folds` cells. Each cell samples
/// `draws_per_fold` hyperparameter draws, fits each on the training part
/// and keeps the one with the highest validation AUC (first on ties,
/// converged fits preferred).
///
/// Cells run in parallel; the report does not depend on scheduling.
pub fn random_search_cv(dataset: &Dataset, plan: &CvPlan, draws_per_fold: usize) -> Result<CvReport, SelectionError> {
    if draws_per_fold == 0 {
        return Err(SelectionError::Parameter("draws_per_fold must be positive".into()));
    }
    let labels = dataset.design.labels();
    let splits: Vec<Vec<Fold>> = (0..plan.rounds).map(|r| kfold_split(labels, plan, r)).collect::<Result<_, _>>()?;
    let cells: Vec<CvCell> = (0..plan.cells())
        .into_par_iter()
        .map(|cell| {
            let (round, fold) = (cell / plan.folds, cell % plan.folds);
            run_cell(dataset, plan, round, fold, &splits[round][fold], draws_per_fold)
        })
        .collect::<Result<_, _>>()?;

    let census = ConvergenceCensus {
        fits: cells.iter().map(|c| c.draws.len()).sum(),
        converged: cells.iter().flat_map(|c| &c.draws).filter(|d| d.converged).count(),
        flagged_cells: cells.iter().filter(|c| c.flagged).map(|c| (c.round, c.fold)).collect(),
    };
    Ok(CvReport {
        feature_set: dataset.feature_set.clone(),
        plan: *plan,
        draws_per_fold,
        selection_protocol: "per-cell selection on the reported validation fold (no nested CV)",
        summary: AucSummary::of(&cells),
        census,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Row {
    pub feature_set: String,
    pub train_auc_mean: f64,
    pub train_auc_sd: f64,
    pub val_auc_mean: f64,
    pub val_auc_sd: f64,
}

impl Table1Row {
    pub fn of(report: &CvReport) -> Self {
        let s = report.summary;
        Table1Row {
            feature_set: report.feature_set.id(),
            train_auc_mean: s.train_mean,
            train_auc_sd: s.train_sd,
            val_auc_mean: s.val_mean,
            val_auc_sd: s.val_sd,
        }
    }
}

/// Cross-validate each feature set with the same plan. Folds and draws
/// depend only on the seed, so the sets are compared on identical splits.
pub fn table1_experiment(
    samples: &[Sample],
    feature_sets: &[FeatureSet],
    plan: &CvPlan,
    draws_per_fold: usize,
) -> Result<Vec<CvReport>, SelectionError> {
    feature_sets
        .iter()
        .map(|set| random_search_cv(&Dataset::from_samples(samples, set)?, plan, draws_per_fold))
        .collect()
}

pub fn write_table1_csv<W: Write>(rows: &[Table1Row], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_sd() {
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_sd(&[0.7]), (0.7, 0.0));
    }
}
