use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;
use statrs::function::erf::erfc;

use super::likelihood::{log1p_exp, sigmoid};
use super::solver::Standardizer;
use super::{Dataset, Design, FittedModel, GlmError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermInference {
    pub name: String,
    pub coefficient: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceReport {
    /// Intercept first.
    pub terms: Vec<TermInference>,
    pub n: usize,
    pub log_likelihood: f64,
    pub null_log_likelihood: f64,
    pub pseudo_r2: f64,
    pub adjusted_pseudo_r2: f64,
}

/// Log-likelihood of the intercept-only maximum-likelihood model.
pub fn null_log_likelihood(labels: &[u8]) -> f64 {
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let neg = n - pos;
    let term = |c: f64| if c > 0.0 { c * (c / n).ln() } else { 0.0 };
    term(pos) + term(neg)
}

/// Adjusted McFadden measure `1 − (ll_model − k)/ll_null`.
pub fn adjusted_pseudo_r2(ll_model: f64, ll_null: f64, k: usize) -> Result<f64, GlmError> {
    if ll_null.is_nan() || ll_null >= 0.0 || !ll_model.is_finite() {
        return Err(GlmError::UndefinedMeasure(ll_null));
    }
    Ok(1.0 - (ll_model - k as f64) / ll_null)
}

/// Two-sided normal p-value for a Wald statistic.
pub(crate) fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

pub fn wald_inference(model: &FittedModel, dataset: &Dataset) -> Result<InferenceReport, GlmError> {
    if model.feature_set() != &dataset.feature_set {
        return Err(GlmError::Shape { expected: model.feature_set().len(), got: dataset.feature_set.len() });
    }
    let mut names = vec!["intercept".to_string()];
    names.extend(dataset.feature_set.names().into_iter().map(String::from));
    wald_design(&dataset.design, model.coefficients(), &names)
}

/// Wald statistics from the inverse observed information at `coefficients`.
pub fn wald_design(design: &Design, coefficients: &[f64], names: &[String]) -> Result<InferenceReport, GlmError> {
    let dim = design.k() + 1;
    if coefficients.len() != dim || names.len() != dim {
        return Err(GlmError::Shape { expected: dim, got: coefficients.len().min(names.len()) });
    }
    let eta = design.linear_predictor(coefficients)?;
    let loglik: f64 = eta.iter().zip(design.labels()).map(|(&l, &y)| f64::from(y) * l - log1p_exp(l)).sum();

    // Information in standardized coordinates, then mapped back through the
    // linear change of variables β = T·z.
    let std = Standardizer::of(design);
    let z = std.transform(design);
    let k = design.k();
    let mut info = DMatrix::<f64>::zeros(dim, dim);
    let mut row = vec![0.0; dim];
    for (i, &l) in eta.iter().enumerate() {
        let p = sigmoid(l);
        let w = p * (1.0 - p);
        row[0] = 1.0;
        row[1..].copy_from_slice(&z[i * k..(i + 1) * k]);
        for a in 0..dim {
            for b in a..dim {
                info[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            info[(a, b)] = info[(b, a)];
        }
    }
    let eig = SymmetricEigen::new(info);
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let min_ev = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if max_ev.is_nan() || max_ev <= 0.0 || min_ev <= max_ev * 1e-12 {
        return Err(GlmError::SingularInformation);
    }
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v));
    let cov_z = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();

    let mut t = DMatrix::<f64>::zeros(dim, dim);
    t[(0, 0)] = 1.0;
    for j in 1..dim {
        t[(0, j)] = -std.mean[j - 1] / std.scale[j - 1];
        t[(j, j)] = 1.0 / std.scale[j - 1];
    }
    let cov = &t * cov_z * t.transpose();

    let terms = (0..dim)
        .map(|j| {
            let se = cov[(j, j)].max(0.0).sqrt();
            let zstat = if se > 0.0 { coefficients[j] / se } else { 0.0 };
            TermInference {
                name: names[j].clone(),
                coefficient: coefficients[j],
                std_error: se,
                z: zstat,
                p_value: two_sided_p(zstat),
            }
        })
        .collect();

    let ll_null = null_log_likelihood(design.labels());
    Ok(InferenceReport {
        terms,
        n: design.n(),
        log_likelihood: loglik,
        null_log_likelihood: ll_null,
        pseudo_r2: 1.0 - loglik / ll_null,
        adjusted_pseudo_r2: adjusted_pseudo_r2(loglik, ll_null, k)?,
    })
}
