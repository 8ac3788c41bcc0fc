use super::{Design, GlmError, Penalty};

/// Logistic function, evaluated without overflow for large `|l|`.
pub fn sigmoid(l: f64) -> f64 {
    if l >= 0.0 {
        1.0 / (1.0 + (-l).exp())
    } else {
        let e = l.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(l))` without overflow.
pub(crate) fn log1p_exp(l: f64) -> f64 {
    if l > 0.0 {
        l + (-l).exp().ln_1p()
    } else {
        l.exp().ln_1p()
    }
}

/// Bernoulli negative log-likelihood `Σ log(1+exp(lᵢ)) − yᵢlᵢ` and its
/// gradient with respect to `(β₀, β₁, …)`.
pub fn negative_log_likelihood(coefficients: &[f64], design: &Design) -> Result<(f64, Vec<f64>), GlmError> {
    let eta = design.linear_predictor(coefficients)?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; design.k() + 1];
    for (i, &l) in eta.iter().enumerate() {
        let y = f64::from(design.labels()[i]);
        loss += log1p_exp(l) - y * l;
        let r = sigmoid(l) - y;
        grad[0] += r;
        for (g, x) in grad[1..].iter_mut().zip(design.row(i)) {
            *g += r * x;
        }
    }
    Ok((loss, grad))
}

/// Optimality residual in raw coordinates: `‖∇J‖∞` for l2 and for the
/// unpenalized problem, the KKT subgradient residual for l1.
pub fn optimality_residual(design: &Design, penalty: Penalty, coefficients: &[f64]) -> Result<f64, GlmError> {
    let (_, grad) = negative_log_likelihood(coefficients, design)?;
    let weights = vec![penalty.weight(); coefficients.len() - 1];
    Ok(penalty.residual(&grad, coefficients, &weights))
}
