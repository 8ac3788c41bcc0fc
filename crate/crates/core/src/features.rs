//! Feature expansion: main effects in raw units plus pairwise products.
//!
//! No standardization happens here or anywhere downstream. Persisted
//! coefficients are per raw unit, so the published coefficient vector can be
//! applied to laboratory values directly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{BiomarkerRecord, Biomarkers};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FeatureError {
    #[error("record is missing required biomarker `{0}`")]
    Incomplete(&'static str),
    #[error("unknown feature set `{0}`")]
    UnknownSet(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("feature set must not be empty or repeat a feature")]
    InvalidSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Feature {
    Ldh,
    Lymphocyte,
    HsCrp,
    LdhLymphocyte,
    LdhHsCrp,
    LymphocyteHsCrp,
}

impl Feature {
    pub const ALL: [Feature; 6] = [
        Feature::Ldh,
        Feature::Lymphocyte,
        Feature::HsCrp,
        Feature::LdhLymphocyte,
        Feature::LdhHsCrp,
        Feature::LymphocyteHsCrp,
    ];

    pub const INTERACTIONS: [Feature; 3] = [Feature::LdhLymphocyte, Feature::LdhHsCrp, Feature::LymphocyteHsCrp];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Ldh => "ldh",
            Feature::Lymphocyte => "lymphocyte_pct",
            Feature::HsCrp => "hs_crp",
            Feature::LdhLymphocyte => "ldh:lymphocyte_pct",
            Feature::LdhHsCrp => "ldh:hs_crp",
            Feature::LymphocyteHsCrp => "lymphocyte_pct:hs_crp",
        }
    }

    pub fn is_interaction(self) -> bool {
        Feature::INTERACTIONS.contains(&self)
    }

    /// Raw biomarkers this feature is computed from.
    pub fn requires(self) -> &'static [&'static str] {
        match self {
            Feature::Ldh => &["ldh"],
            Feature::Lymphocyte => &["lymphocyte_pct"],
            Feature::HsCrp => &["hs_crp"],
            Feature::LdhLymphocyte => &["ldh", "lymphocyte_pct"],
            Feature::LdhHsCrp => &["ldh", "hs_crp"],
            Feature::LymphocyteHsCrp => &["lymphocyte_pct", "hs_crp"],
        }
    }

    pub fn value(self, m: &Biomarkers) -> f64 {
        match self {
            Feature::Ldh => m.ldh,
            Feature::Lymphocyte => m.lymphocyte_pct,
            Feature::HsCrp => m.hs_crp,
            Feature::LdhLymphocyte => m.ldh * m.lymphocyte_pct,
            Feature::LdhHsCrp => m.ldh * m.hs_crp,
            Feature::LymphocyteHsCrp => m.lymphocyte_pct * m.hs_crp,
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = FeatureError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Feature::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| FeatureError::UnknownFeature(s.to_string()))
    }
}

/// An ordered list of features. The six catalog sets are nested; other
/// orderings only arise from stepwise selection.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureSet {
    features: Vec<Feature>,
}

impl FeatureSet {
    pub fn new(features: Vec<Feature>) -> Result<Self, FeatureError> {
        let mut sorted = features.clone();
        sorted.sort();
        sorted.dedup();
        if features.is_empty() || sorted.len() != features.len() {
            return Err(FeatureError::InvalidSet);
        }
        Ok(FeatureSet { features })
    }

    /// The six nested sets, smallest first.
    pub fn catalog() -> Vec<FeatureSet> {
        (1..=6).map(|k| FeatureSet { features: Feature::ALL[..k].to_vec() }).collect()
    }

    /// Catalog set by its 1-based row number.
    pub fn catalog_set(row: usize) -> Result<FeatureSet, FeatureError> {
        if (1..=6).contains(&row) {
            Ok(FeatureSet { features: Feature::ALL[..row].to_vec() })
        } else {
            Err(FeatureError::UnknownSet(format!("set{row}")))
        }
    }

    /// The five-feature set of the final model.
    pub fn final_model() -> FeatureSet {
        FeatureSet::catalog_set(5).expect("row 5 exists")
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn contains(&self, f: Feature) -> bool {
        self.features.contains(&f)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.features.iter().map(|f| f.name()).collect()
    }

    /// `Some(k)` when this is catalog row `k` exactly.
    pub fn catalog_row(&self) -> Option<usize> {
        let k = self.features.len();
        (k <= 6 && self.features[..] == Feature::ALL[..k]).then_some(k)
    }

    /// `set1`..`set6` for catalog sets, otherwise feature names joined by `+`.
    pub fn id(&self) -> String {
        match self.catalog_row() {
            Some(k) => format!("set{k}"),
            None => self.names().join("+"),
        }
    }

    pub fn with(&self, f: Feature) -> Result<FeatureSet, FeatureError> {
        let mut features = self.features.clone();
        features.push(f);
        FeatureSet::new(features)
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for FeatureSet {
    type Err = FeatureError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(row) = s.strip_prefix("set") {
            let row: usize = row.parse().map_err(|_| FeatureError::UnknownSet(s.to_string()))?;
            return FeatureSet::catalog_set(row);
        }
        let features = s.split('+').map(str::parse).collect::<Result<Vec<_>, _>>()?;
        FeatureSet::new(features)
    }
}

impl Serialize for FeatureSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.id())
    }
}

impl<'de> Deserialize<'de> for FeatureSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Feature values aligned to a [`FeatureSet`]. The intercept is not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        FeatureVector(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn expand_biomarkers(markers: &Biomarkers, set: &FeatureSet) -> FeatureVector {
    FeatureVector(set.features.iter().map(|f| f.value(markers)).collect())
}

/// Expand a record, which only needs the biomarkers the set actually uses.
pub fn expand(record: &BiomarkerRecord, set: &FeatureSet) -> Result<FeatureVector, FeatureError> {
    let present = |name: &str| match name {
        "ldh" => record.ldh.is_some(),
        "lymphocyte_pct" => record.lymphocyte_pct.is_some(),
        _ => record.hs_crp.is_some(),
    };
    for f in &set.features {
        if let Some(missing) = f.requires().iter().find(|n| !present(n)) {
            return Err(FeatureError::Incomplete(missing));
        }
    }
    // Unused slots are never read by the set's features.
    let markers = Biomarkers {
        ldh: record.ldh.unwrap_or(f64::NAN),
        lymphocyte_pct: record.lymphocyte_pct.unwrap_or(f64::NAN),
        hs_crp: record.hs_crp.unwrap_or(f64::NAN),
    };
    Ok(expand_biomarkers(&markers, set))
}
