//! Monotone accelerated proximal gradient (MFISTA) with backtracking.
//!
//! Raw biomarker columns and their products span five orders of magnitude,
//! so the solver works in centered, unit-variance coordinates
//! `zⱼ = βⱼ·sⱼ`, `z₀ = β₀ + Σ βⱼ·μⱼ`. The penalty stays separable under this
//! change of variables (per-coordinate weights `λ/sⱼ²` for l2 and `λ/sⱼ` for
//! l1), so the problem solved is exactly the raw-unit problem.

use super::{Design, GlmError};

/// Penalty with its weight `λ = 1/c` already applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    None,
    L1(f64),
    L2(f64),
}

impl Penalty {
    pub fn weight(&self) -> f64 {
        match *self {
            Penalty::None => 0.0,
            Penalty::L1(w) | Penalty::L2(w) => w,
        }
    }

    fn value(&self, coef: &[f64], w: &[f64]) -> f64 {
        match self {
            Penalty::None => 0.0,
            Penalty::L1(_) => coef[1..].iter().zip(w).map(|(b, w)| w * b.abs()).sum(),
            Penalty::L2(_) => 0.5 * coef[1..].iter().zip(w).map(|(b, w)| w * b * b).sum::<f64>(),
        }
    }

    fn prox(&self, v: &mut [f64], step: f64, w: &[f64]) {
        match self {
            Penalty::None => {}
            Penalty::L1(_) => {
                for (x, w) in v[1..].iter_mut().zip(w) {
                    let t = step * w;
                    *x = x.signum() * (x.abs() - t).max(0.0);
                }
            }
            Penalty::L2(_) => {
                for (x, w) in v[1..].iter_mut().zip(w) {
                    *x /= 1.0 + step * w;
                }
            }
        }
    }

    /// Sup-norm optimality residual given the smooth-part gradient.
    pub(crate) fn residual(&self, grad: &[f64], coef: &[f64], w: &[f64]) -> f64 {
        let slopes = grad[1..].iter().zip(&coef[1..]).zip(w).map(|((&g, &b), &w)| match self {
            Penalty::None => g.abs(),
            Penalty::L2(_) => (g + w * b).abs(),
            Penalty::L1(_) if b != 0.0 => (g + w * b.signum()).abs(),
            Penalty::L1(_) => (g.abs() - w).max(0.0),
        });
        slopes.fold(grad[0].abs(), f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Raw-unit coefficients, intercept first.
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub objective: f64,
    pub trace: Vec<f64>,
}

/// Column centering and scaling shared by the solver and Wald inference.
#[derive(Debug, Clone)]
pub(crate) struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn of(design: &Design) -> Self {
        let (n, k) = (design.n() as f64, design.k());
        let mut mean = vec![0.0; k];
        for i in 0..design.n() {
            for (m, x) in mean.iter_mut().zip(design.row(i)) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; k];
        for i in 0..design.n() {
            for ((v, x), m) in var.iter_mut().zip(design.row(i)).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 0.0 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    /// Row-major standardized matrix.
    pub fn transform(&self, design: &Design) -> Vec<f64> {
        let mut z = Vec::with_capacity(design.n() * design.k());
        for i in 0..design.n() {
            z.extend(design.row(i).iter().zip(&self.mean).zip(&self.scale).map(|((x, m), s)| (x - m) / s));
        }
        z
    }

    pub fn to_raw(&self, z: &[f64]) -> Vec<f64> {
        let mut beta = vec![0.0; z.len()];
        let mut shift = 0.0;
        for j in 1..z.len() {
            beta[j] = z[j] / self.scale[j - 1];
            shift += beta[j] * self.mean[j - 1];
        }
        beta[0] = z[0] - shift;
        beta
    }
}

struct Working<'a> {
    k: usize,
    z: &'a [f64],
    y: &'a [u8],
}

impl Working<'_> {
    fn eta(&self, coef: &[f64], out: &mut [f64]) {
        for (i, e) in out.iter_mut().enumerate() {
            let row = &self.z[i * self.k..(i + 1) * self.k];
            *e = row.iter().zip(&coef[1..]).fold(coef[0], |acc, (x, b)| acc + x * b);
        }
    }

    /// Gradient at `eta`, and the loss too when asked. One `exp` per row.
    fn eval(&self, eta: &[f64], grad: &mut [f64], want_loss: bool) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for (i, (&l, &y)) in eta.iter().zip(self.y).enumerate() {
            let e = (-l.abs()).exp();
            let p = if l >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
            if want_loss {
                loss += l.max(0.0) + e.ln_1p() - f64::from(y) * l;
            }
            let r = p - f64::from(y);
            grad[0] += r;
            let row = &self.z[i * self.k..(i + 1) * self.k];
            for (g, x) in grad[1..].iter_mut().zip(row) {
                *g += r * x;
            }
        }
        loss
    }
}

/// Minimize `NLL(β) + penalty(β₁…β_k)` from the zero vector.
pub fn solve(
    design: &Design,
    penalty: Penalty,
    max_iterations: usize,
    tolerance: f64,
    record_trace: bool,
) -> Result<Solution, GlmError> {
    let pos = design.positives();
    if pos == 0 || pos == design.n() {
        return Err(GlmError::SingleClass);
    }
    let std = Standardizer::of(design);
    let zmat = std.transform(design);
    let (n, k) = (design.n(), design.k());
    let work = Working { k, z: &zmat, y: design.labels() };
    let lambda = penalty.weight();
    let w: Vec<f64> = std
        .scale
        .iter()
        .map(|s| match penalty {
            Penalty::None => 0.0,
            Penalty::L1(_) => lambda / s,
            Penalty::L2(_) => lambda / (s * s),
        })
        .collect();

    let dim = k + 1;
    let mut x = vec![0.0; dim];
    let mut y = x.clone();
    let mut cand = vec![0.0; dim];
    let mut eta_x = vec![0.0; n];
    let mut eta_y = vec![0.0; n];
    let mut eta_c = vec![0.0; n];
    let mut gx = vec![0.0; dim];
    let mut gy = vec![0.0; dim];
    let mut gc = vec![0.0; dim];

    let mut obj_x = work.eval(&eta_x, &mut gx, true) + penalty.value(&x, &w);
    let mut residual = penalty.residual(&gx, &x, &w);
    let mut trace = Vec::new();
    if record_trace {
        trace.push(obj_x);
    }

    let mut lip = 0.25 * n as f64;
    let mut t = 1.0f64;
    let mut iterations = 0;
    let mut converged = residual <= tolerance;
    let mut from_x = true;

    while !converged && iterations < max_iterations {
        iterations += 1;
        if from_x {
            gy.copy_from_slice(&gx);
        } else {
            work.eval(&eta_y, &mut gy, false);
        }

        // Backtracking. For convex f, <∇f(c) − ∇f(y), c − y> ≤ (L/2)‖c − y‖²
        // implies the quadratic upper bound, and unlike comparing function
        // values it does not degrade to rounding noise near the optimum.
        let fc = loop {
            let step = 1.0 / lip;
            for j in 0..dim {
                cand[j] = y[j] - step * gy[j];
            }
            penalty.prox(&mut cand, step, &w);
            work.eta(&cand, &mut eta_c);
            let fc = work.eval(&eta_c, &mut gc, true);
            let mut curv = 0.0;
            let mut sq = 0.0;
            for j in 0..dim {
                let d = cand[j] - y[j];
                curv += (gc[j] - gy[j]) * d;
                sq += d * d;
            }
            if curv <= 0.5 * lip * sq || sq == 0.0 {
                break fc;
            }
            lip *= 2.0;
        };
        let obj_c = fc + penalty.value(&cand, &w);

        // A step taken from x itself is a proximal gradient step, which
        // cannot increase the objective beyond rounding; accept it.
        if obj_c <= obj_x || from_x {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let mom = (t - 1.0) / t_next;
            for j in 0..dim {
                y[j] = cand[j] + mom * (cand[j] - x[j]);
            }
            // the linear predictor is linear in the coefficients
            for i in 0..n {
                eta_y[i] = eta_c[i] + mom * (eta_c[i] - eta_x[i]);
            }
            x.copy_from_slice(&cand);
            eta_x.copy_from_slice(&eta_c);
            gx.copy_from_slice(&gc);
            t = t_next;
            obj_x = obj_c;
            residual = penalty.residual(&gx, &x, &w);
            if record_trace {
                trace.push(obj_x);
            }
            from_x = false;
        } else {
            // objective went up: drop momentum and restart from x
            y.copy_from_slice(&x);
            eta_y.copy_from_slice(&eta_x);
            t = 1.0;
            from_x = true;
        }
        converged = residual <= tolerance;
        lip *= 0.9;
    }

    Ok(Solution { coefficients: std.to_raw(&x), converged, iterations, residual, objective: obj_x, trace })
}
