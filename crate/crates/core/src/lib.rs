//! Interaction-term logistic regression for fatality prognosis from three
//! blood biomarkers (LDH, lymphocyte %, hs-CRP).
//!
//! The crate is organised bottom-up:
//!
//! * [`cohort`] ingests patient records, applies completeness rules and
//!   collapses records to one sample per patient-day.
//! * [`synth`] generates reproducible synthetic cohorts whose outcomes are
//!   drawn from a known model.
//! * [`features`] expands biomarker triples into the six nested feature sets,
//!   including pairwise interaction products in raw units.
//! * [`glm`] holds the penalized logistic regression: likelihood, proximal
//!   gradient solver, Wald inference, adjusted pseudo-R² and forward stepwise
//!   selection.
//! * [`metrics`] computes ROC/AUC, confusion matrices, accuracy and f1.
//! * [`selection`] runs repeated k-fold cross-validation with random
//!   hyperparameter search, median coefficient aggregation and threshold
//!   tuning.
//! * [`forecast`] evaluates multi-day-ahead forecasting over daily records.

pub mod cohort;
pub mod features;
pub mod forecast;
pub mod glm;
pub mod metrics;
pub mod selection;
pub mod synth;

mod rng;

pub use cohort::{BiomarkerRecord, Biomarkers, CohortDataset, Outcome, OutcomeTime, PatientTimeline};
pub use features::{Feature, FeatureSet, FeatureVector};
pub use glm::{FittedModel, PenaltyKind, PenaltySpec};

/// Toolkit version written into persisted models and run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
