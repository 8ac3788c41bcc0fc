use serde::{Deserialize, Serialize};

use super::likelihood::sigmoid;
use super::GlmError;
use crate::cohort::{Biomarkers, Outcome};
use crate::features::{expand_biomarkers, FeatureSet, FeatureVector};

/// Median cross-validated coefficients of the five-feature model, intercept
/// first: LDH, lymphocyte %, hs-CRP, LDH:lymphocyte, LDH:hs-CRP.
pub const PUBLISHED_COEFFICIENTS: [f64; 6] = [-4.976, 1.440e-2, -3.053e-1, 4.378e-2, 4.766e-4, -6.748e-5];
pub const PUBLISHED_THRESHOLD: f64 = 0.8;

/// A logistic model over a feature set with its decision threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    feature_set: FeatureSet,
    coefficients: Vec<f64>,
    threshold: f64,
    pub provenance: String,
}

/// Outputs of scoring one patient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Score {
    pub log_odds: f64,
    pub probability: f64,
    pub outcome: Outcome,
}

impl FittedModel {
    pub fn new(
        feature_set: FeatureSet,
        coefficients: Vec<f64>,
        threshold: f64,
        provenance: impl Into<String>,
    ) -> Result<Self, GlmError> {
        if coefficients.len() != feature_set.len() + 1 {
            return Err(GlmError::Shape { expected: feature_set.len() + 1, got: coefficients.len() });
        }
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(GlmError::InvalidThreshold(threshold));
        }
        Ok(FittedModel { feature_set, coefficients, threshold, provenance: provenance.into() })
    }

    pub fn feature_set(&self) -> &FeatureSet {
        &self.feature_set
    }

    /// Intercept first.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn with_threshold(&self, threshold: f64) -> Result<Self, GlmError> {
        FittedModel::new(self.feature_set.clone(), self.coefficients.clone(), threshold, self.provenance.clone())
    }

    /// `β₀ + Σ βᵢ·xᵢ`.
    pub fn log_odds(&self, features: &FeatureVector) -> Result<f64, GlmError> {
        let x = features.values();
        if x.len() != self.feature_set.len() {
            return Err(GlmError::Shape { expected: self.feature_set.len(), got: x.len() });
        }
        Ok(x.iter().zip(&self.coefficients[1..]).fold(self.coefficients[0], |acc, (x, b)| acc + b * x))
    }

    pub fn probability(&self, features: &FeatureVector) -> Result<f64, GlmError> {
        self.log_odds(features).map(probability_from_log_odds)
    }

    /// Death iff the probability is strictly larger than the threshold.
    pub fn classify(&self, probability: f64) -> Outcome {
        if probability > self.threshold {
            Outcome::Death
        } else {
            Outcome::Survival
        }
    }

    pub fn score(&self, markers: &Biomarkers) -> Score {
        let x = expand_biomarkers(markers, &self.feature_set);
        let log_odds = self.log_odds(&x).expect("expansion matches the model's feature set");
        let probability = probability_from_log_odds(log_odds);
        Score { log_odds, probability, outcome: self.classify(probability) }
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            feature_set: self.feature_set.clone(),
            coefficients: self.coefficients.clone(),
            threshold: self.threshold,
            provenance: self.provenance.clone(),
            version: crate::VERSION.to_string(),
        }
    }

    /// Pretty JSON with a fixed field order and a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_document()).expect("model document serializes");
        s.push('\n');
        s
    }

    pub fn from_json(json: &str) -> Result<Self, GlmError> {
        let doc: ModelDocument = serde_json::from_str(json).map_err(|e| GlmError::Document(e.to_string()))?;
        doc.into_model()
    }
}

/// The persisted form of a [`FittedModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub feature_set: FeatureSet,
    pub coefficients: Vec<f64>,
    pub threshold: f64,
    pub provenance: String,
    pub version: String,
}

impl ModelDocument {
    pub fn into_model(self) -> Result<FittedModel, GlmError> {
        if let Some(b) = self.coefficients.iter().find(|b| !b.is_finite()) {
            return Err(GlmError::Document(format!("non-finite coefficient {b}")));
        }
        FittedModel::new(self.feature_set, self.coefficients, self.threshold, self.provenance)
    }
}

/// Probability kept inside the open unit interval even when `l` saturates.
fn probability_from_log_odds(l: f64) -> f64 {
    sigmoid(l).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// The final five-feature model with threshold 0.8.
pub fn published_model() -> FittedModel {
    FittedModel::new(
        FeatureSet::final_model(),
        PUBLISHED_COEFFICIENTS.to_vec(),
        PUBLISHED_THRESHOLD,
        "published median coefficients of 500 cross-validated fits",
    )
    .expect("published model is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn x5(l: f64, y: f64, c: f64) -> FeatureVector {
        expand_biomarkers(&Biomarkers::new(l, y, c).unwrap(), &FeatureSet::final_model())
    }

    #[test]
    fn published_model_hand_evaluations() {
        let m = published_model();
        let l0 = m.log_odds(&x5(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(l0, -4.976);
        let p0 = m.probability(&x5(0.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(p0, 1.0 / (1.0 + 4.976f64.exp()), max_relative = 1e-14);
        assert!((p0 - 0.00685).abs() < 5e-6);

        // -4.976 + 8.64 - 1.5265 + 4.378 + 1.4298 - 4.0488
        let l = m.log_odds(&x5(600.0, 5.0, 100.0)).unwrap();
        assert_relative_eq!(l, 3.8965, max_relative = 1e-12);
        let s = m.score(&Biomarkers::new(600.0, 5.0, 100.0).unwrap());
        assert_relative_eq!(s.probability, 0.980_07, max_relative = 1e-4);
        assert_eq!(s.outcome, Outcome::Death);

        // -4.976 + 2.88 - 9.159 + 0.2189 + 2.8596 - 0.06748
        let l = m.log_odds(&x5(200.0, 30.0, 5.0)).unwrap();
        assert_relative_eq!(l, -8.24398, max_relative = 1e-12);
        let s = m.score(&Biomarkers::new(200.0, 30.0, 5.0).unwrap());
        assert!((s.probability - 2.6e-4).abs() < 0.05e-4);
        assert_eq!(s.outcome, Outcome::Survival);
    }

    #[test]
    fn threshold_is_strict() {
        let m = published_model();
        assert_eq!(m.classify(0.8), Outcome::Survival);
        assert_eq!(m.classify(0.800_000_1), Outcome::Death);
    }

    #[test]
    fn validation() {
        let s5 = FeatureSet::final_model();
        assert!(matches!(FittedModel::new(s5.clone(), vec![0.0; 5], 0.5, ""), Err(GlmError::Shape { .. })));
        assert!(FittedModel::new(s5.clone(), vec![0.0; 6], 1.0, "").is_err());
        assert!(FittedModel::new(s5, vec![0.0; 6], 0.0, "").is_err());
        let m = published_model();
        assert!(m.log_odds(&FeatureVector::new(vec![1.0; 3])).is_err());
    }

    #[test]
    fn json_round_trip_is_stable() {
        let m = published_model();
        let json = m.to_json();
        let back = FittedModel::from_json(&json).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json(), json);
        let keys: Vec<_> = ["feature_set", "coefficients", "threshold", "provenance", "version"]
            .iter()
            .map(|k| json.find(&format!("\"{k}\"")).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        assert!(json.contains("\"set5\""));
    }

    proptest! {
        #[test]
        fn probability_open_interval(l in 0.0..1e6f64, y in 0.0..100.0f64, c in 0.0..1e5f64) {
            let p = published_model().probability(&x5(l, y, c)).unwrap();
            prop_assert!(p > 0.0 && p < 1.0);
        }

        #[test]
        fn log_odds_linear_in_each_feature(base in proptest::collection::vec(-100.0..100.0f64, 5),
                                           j in 0usize..5, d in -50.0..50.0f64) {
            let m = published_model();
            let mut x1 = base.clone();
            x1[j] += d;
            let l0 = m.log_odds(&FeatureVector::new(base)).unwrap();
            let l1 = m.log_odds(&FeatureVector::new(x1)).unwrap();
            let slope = m.coefficients()[j + 1];
            prop_assert!((l1 - l0 - slope * d).abs() < 1e-9);
        }
    }
}
