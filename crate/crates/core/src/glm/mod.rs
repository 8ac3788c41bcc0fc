//! Penalized logistic regression.
//!
//! The objective minimized by [`fit`] is
//!
//! ```text
//! J(β) = Σᵢ [log(1 + exp(lᵢ)) − yᵢ·lᵢ] + (1/c)·P(β₁…β_k),     lᵢ = β₀ + Σⱼ βⱼ·xᵢⱼ
//! ```
//!
//! with `P = ½‖·‖₂²` (l2) or `‖·‖₁` (l1). The intercept is never penalized,
//! so `c` acts as an inverse regularization strength.

mod inference;
mod likelihood;
mod model;
mod solver;
mod stepwise;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::Sample;
use crate::features::{expand_biomarkers, FeatureSet};

pub use inference::{
    adjusted_pseudo_r2, null_log_likelihood, wald_design, wald_inference, InferenceReport, TermInference,
};
pub use likelihood::{negative_log_likelihood, optimality_residual, sigmoid};
pub use model::{published_model, FittedModel, ModelDocument, Score, PUBLISHED_COEFFICIENTS, PUBLISHED_THRESHOLD};
pub use solver::{solve, Penalty, Solution};
pub use stepwise::{
    forward_select, stepwise_select, CandidateScore, Column, InteractionSelection, StepRecord, StepwiseResult,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GlmError {
    #[error("shape error: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("data error: label {0} is not binary")]
    NonBinaryLabel(u8),
    #[error("data error: non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("data error: empty dataset")]
    Empty,
    #[error("degenerate data: only one outcome class present")]
    SingleClass,
    #[error("invalid penalty: c must be finite and > 0, got {0}")]
    InvalidPenalty(f64),
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid threshold {0}: must lie strictly between 0 and 1")]
    InvalidThreshold(f64),
    #[error("inference error: information matrix is singular (collinear features?)")]
    SingularInformation,
    #[error("undefined measure: null log-likelihood must be negative, got {0}")]
    UndefinedMeasure(f64),
    #[error("model document error: {0}")]
    Document(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    L1,
    L2,
}

impl std::fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PenaltyKind::L1 => "l1",
            PenaltyKind::L2 => "l2",
        })
    }
}

impl std::str::FromStr for PenaltyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "l1" => Ok(PenaltyKind::L1),
            "l2" => Ok(PenaltyKind::L2),
            other => Err(format!("unknown penalty `{other}` (expected l1 or l2)")),
        }
    }
}

/// Penalty type and inverse strength `c` (larger `c` = weaker penalty).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    pub c: f64,
}

impl PenaltySpec {
    pub fn new(kind: PenaltyKind, c: f64) -> Result<Self, GlmError> {
        if c.is_finite() && c > 0.0 {
            Ok(PenaltySpec { kind, c })
        } else {
            Err(GlmError::InvalidPenalty(c))
        }
    }

    pub fn l1(c: f64) -> Result<Self, GlmError> {
        Self::new(PenaltyKind::L1, c)
    }

    pub fn l2(c: f64) -> Result<Self, GlmError> {
        Self::new(PenaltyKind::L2, c)
    }

    pub fn penalty(&self) -> Penalty {
        match self.kind {
            PenaltyKind::L1 => Penalty::L1(1.0 / self.c),
            PenaltyKind::L2 => Penalty::L2(1.0 / self.c),
        }
    }
}

/// Solver settings. The intercept is never penalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub penalty: PenaltySpec,
    pub max_iterations: usize,
    /// Bound on the optimality residual: gradient norm for l2, KKT
    /// subgradient residual for l1.
    pub tolerance: f64,
    /// Keep the objective value of every accepted iterate.
    #[serde(default)]
    pub record_trace: bool,
}

pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

impl FitConfig {
    pub fn new(penalty: PenaltySpec) -> Self {
        FitConfig { penalty, max_iterations: DEFAULT_MAX_ITERATIONS, tolerance: DEFAULT_TOLERANCE, record_trace: false }
    }

    pub(crate) fn validate(&self) -> Result<(), GlmError> {
        if self.max_iterations == 0 {
            return Err(GlmError::InvalidConfig("max_iterations must be positive".into()));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(GlmError::InvalidConfig(format!("tolerance must be > 0, got {}", self.tolerance)));
        }
        PenaltySpec::new(self.penalty.kind, self.penalty.c).map(|_| ())
    }
}

/// A row-major design matrix (no intercept column) with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    n: usize,
    k: usize,
    x: Vec<f64>,
    y: Vec<u8>,
}

impl Design {
    pub fn new(k: usize, x: Vec<f64>, y: Vec<u8>) -> Result<Self, GlmError> {
        if y.is_empty() {
            return Err(GlmError::Empty);
        }
        if x.len() != y.len() * k {
            return Err(GlmError::Shape { expected: y.len() * k, got: x.len() });
        }
        if let Some(&bad) = y.iter().find(|&&v| v > 1) {
            return Err(GlmError::NonBinaryLabel(bad));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(GlmError::NonFinite { row: pos / k.max(1), col: pos % k.max(1) });
        }
        Ok(Design { n: y.len(), k, x, y })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<u8>) -> Result<Self, GlmError> {
        let k = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != k) {
            return Err(GlmError::Shape { expected: k, got: r.len() });
        }
        Design::new(k, rows.concat(), y)
    }

    /// Columns of equal length, laid out row-major.
    pub fn from_columns(columns: &[&[f64]], y: Vec<u8>) -> Result<Self, GlmError> {
        let n = y.len();
        let k = columns.len();
        if let Some(c) = columns.iter().find(|c| c.len() != n) {
            return Err(GlmError::Shape { expected: n, got: c.len() });
        }
        let mut x = Vec::with_capacity(n * k);
        for i in 0..n {
            x.extend(columns.iter().map(|c| c[i]));
        }
        Design::new(k, x, y)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.k..(i + 1) * self.k]
    }

    pub fn labels(&self) -> &[u8] {
        &self.y
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&v| v == 1).count()
    }

    /// Rows selected by index, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Design {
        let mut x = Vec::with_capacity(idx.len() * self.k);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        Design { n: idx.len(), k: self.k, x, y }
    }

    /// Linear predictor `β₀ + Σ βⱼ xᵢⱼ` for every row.
    pub fn linear_predictor(&self, coefficients: &[f64]) -> Result<Vec<f64>, GlmError> {
        if coefficients.len() != self.k + 1 {
            return Err(GlmError::Shape { expected: self.k + 1, got: coefficients.len() });
        }
        Ok((0..self.n)
            .map(|i| self.row(i).iter().zip(&coefficients[1..]).fold(coefficients[0], |acc, (x, b)| acc + x * b))
            .collect())
    }
}

/// A design bound to the feature set its columns came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_set: FeatureSet,
    pub design: Design,
}

impl Dataset {
    pub fn from_samples(samples: &[Sample], feature_set: &FeatureSet) -> Result<Self, GlmError> {
        let k = feature_set.len();
        let mut x = Vec::with_capacity(samples.len() * k);
        let mut y = Vec::with_capacity(samples.len());
        for s in samples {
            x.extend_from_slice(expand_biomarkers(&s.biomarkers, feature_set).values());
            y.push(s.outcome.code());
        }
        Ok(Dataset { feature_set: feature_set.clone(), design: Design::new(k, x, y)? })
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset { feature_set: self.feature_set.clone(), design: self.design.subset(idx) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    /// Optimality residual at the returned point, measured in the solver's
    /// standardized coordinates.
    pub residual: f64,
    pub objective: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub model: FittedModel,
    pub diagnostics: FitDiagnostics,
}

/// Fit a penalized model starting from the zero vector. The returned model
/// carries the default threshold 0.5 until it is tuned.
pub fn fit(dataset: &Dataset, config: &FitConfig) -> Result<Fit, GlmError> {
    config.validate()?;
    let sol =
        solve(&dataset.design, config.penalty.penalty(), config.max_iterations, config.tolerance, config.record_trace)?;
    let provenance = format!(
        "fit {} c={} on n={} ({} deaths)",
        config.penalty.kind,
        config.penalty.c,
        dataset.design.n(),
        dataset.design.positives()
    );
    let model = FittedModel::new(dataset.feature_set.clone(), sol.coefficients, 0.5, provenance)?;
    Ok(Fit {
        model,
        diagnostics: FitDiagnostics {
            converged: sol.converged,
            iterations: sol.iterations,
            residual: sol.residual,
            objective: sol.objective,
            trace: sol.trace,
        },
    })
}

/// Unpenalized maximum-likelihood fit with default solver settings.
pub fn fit_mle(dataset: &Dataset) -> Result<Fit, GlmError> {
    let sol = solve(&dataset.design, Penalty::None, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE, false)?;
    let provenance = format!("maximum likelihood on n={}", dataset.design.n());
    let model = FittedModel::new(dataset.feature_set.clone(), sol.coefficients, 0.5, provenance)?;
    Ok(Fit {
        model,
        diagnostics: FitDiagnostics {
            converged: sol.converged,
            iterations: sol.iterations,
            residual: sol.residual,
            objective: sol.objective,
            trace: sol.trace,
        },
    })
}
