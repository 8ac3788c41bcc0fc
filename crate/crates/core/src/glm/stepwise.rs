//! Forward stepwise selection on adjusted McFadden pseudo-R².
//!
//! Every candidate model is an unpenalized maximum-likelihood fit. Because
//! the adjustment charges one unit of log-likelihood per predictor, a term
//! enters exactly when it raises the log-likelihood by more than 1.

use serde::Serialize;

use super::inference::{wald_design, InferenceReport};
use super::solver::{solve, Penalty};
use super::{Design, GlmError, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};
use crate::cohort::Sample;
use crate::features::{Feature, FeatureSet};

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

impl Column {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Column { name: name.into(), values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateScore {
    pub name: String,
    pub adjusted_pseudo_r2: f64,
    pub log_likelihood: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    /// `None` for the starting model.
    pub added: Option<String>,
    pub terms: Vec<String>,
    pub converged: bool,
    pub candidates: Vec<CandidateScore>,
    pub inference: InferenceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepwiseResult {
    /// Candidate names in the order they entered.
    pub selected: Vec<String>,
    pub steps: Vec<StepRecord>,
}

impl StepwiseResult {
    pub fn final_inference(&self) -> &InferenceReport {
        &self.steps.last().expect("at least the starting model").inference
    }
}

struct Evaluated {
    coefficients: Vec<f64>,
    log_likelihood: f64,
    adjusted: f64,
    converged: bool,
    design: Design,
}

fn evaluate(columns: &[&Column], y: &[u8]) -> Result<Evaluated, GlmError> {
    let cols: Vec<&[f64]> = columns.iter().map(|c| c.values.as_slice()).collect();
    let design = Design::from_columns(&cols, y.to_vec())?;
    let sol = solve(&design, Penalty::None, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE, false)?;
    let ll = -super::negative_log_likelihood(&sol.coefficients, &design)?.0;
    let ll_null = super::null_log_likelihood(y);
    Ok(Evaluated {
        adjusted: super::adjusted_pseudo_r2(ll, ll_null, columns.len())?,
        coefficients: sol.coefficients,
        log_likelihood: ll,
        converged: sol.converged,
        design,
    })
}

fn inference_for(ev: &Evaluated, columns: &[&Column]) -> Result<InferenceReport, GlmError> {
    let mut names = vec!["intercept".to_string()];
    names.extend(columns.iter().map(|c| c.name.clone()));
    wald_design(&ev.design, &ev.coefficients, &names)
}

/// Start from `base` and repeatedly add the candidate with the largest
/// adjusted pseudo-R², stopping when no addition improves it.
pub fn forward_select(base: &[Column], candidates: &[Column], y: &[u8]) -> Result<StepwiseResult, GlmError> {
    let mut current: Vec<&Column> = base.iter().collect();
    let mut remaining: Vec<&Column> = candidates.iter().collect();
    let mut best = evaluate(&current, y)?;
    let mut steps = vec![StepRecord {
        added: None,
        terms: current.iter().map(|c| c.name.clone()).collect(),
        converged: best.converged,
        candidates: Vec::new(),
        inference: inference_for(&best, &current)?,
    }];
    let mut selected = Vec::new();

    while !remaining.is_empty() {
        let mut scores = Vec::with_capacity(remaining.len());
        let mut top: Option<(usize, Evaluated)> = None;
        for (i, cand) in remaining.iter().enumerate() {
            let mut cols = current.clone();
            cols.push(cand);
            let ev = evaluate(&cols, y)?;
            scores.push(CandidateScore {
                name: cand.name.clone(),
                adjusted_pseudo_r2: ev.adjusted,
                log_likelihood: ev.log_likelihood,
                converged: ev.converged,
            });
            if top.as_ref().is_none_or(|(_, t)| ev.adjusted > t.adjusted) {
                top = Some((i, ev));
            }
        }
        let (idx, ev) = top.expect("remaining is non-empty");
        if ev.adjusted <= best.adjusted {
            steps.last_mut().expect("starting step exists").candidates = scores;
            break;
        }
        let added = remaining.remove(idx);
        current.push(added);
        selected.push(added.name.clone());
        best = ev;
        steps.last_mut().expect("starting step exists").candidates = scores;
        steps.push(StepRecord {
            added: Some(added.name.clone()),
            terms: current.iter().map(|c| c.name.clone()).collect(),
            converged: best.converged,
            candidates: Vec::new(),
            inference: inference_for(&best, &current)?,
        });
    }
    Ok(StepwiseResult { selected, steps })
}

/// Selection over the three pairwise interactions with the three main
/// effects always retained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteractionSelection {
    pub feature_set: FeatureSet,
    pub result: StepwiseResult,
}

pub fn stepwise_select(samples: &[Sample]) -> Result<InteractionSelection, GlmError> {
    let column = |f: Feature| Column::new(f.name(), samples.iter().map(|s| f.value(&s.biomarkers)).collect());
    let base: Vec<Column> = [Feature::Ldh, Feature::Lymphocyte, Feature::HsCrp].into_iter().map(column).collect();
    let candidates: Vec<Column> = Feature::INTERACTIONS.into_iter().map(column).collect();
    let y: Vec<u8> = samples.iter().map(|s| s.outcome.code()).collect();
    let result = forward_select(&base, &candidates, &y)?;

    // Report the selection in canonical feature order.
    let mut features = vec![Feature::Ldh, Feature::Lymphocyte, Feature::HsCrp];
    features.extend(Feature::INTERACTIONS.into_iter().filter(|f| result.selected.iter().any(|n| n == f.name())));
    let feature_set = FeatureSet::new(features).expect("distinct features");
    Ok(InteractionSelection { feature_set, result })
}
