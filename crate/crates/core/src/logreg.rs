//! L2-regularized logistic regression fitted by damped Newton iterations.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

const MAX_ITER: usize = 100;
const GRAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn linear(row: &[f64], weights: &[f64], bias: f64) -> f64 {
    bias + row.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>()
}

/// Mean negative log-likelihood plus `lambda * |w|^2 / 2`; the bias is unpenalized.
pub fn objective(x: &[Vec<f64>], y: &[u8], lambda: f64, weights: &[f64], bias: f64) -> f64 {
    let n = x.len() as f64;
    let nll: f64 = x
        .iter()
        .zip(y)
        .map(|(r, &l)| {
            let z = linear(r, weights, bias);
            softplus(z) - l as f64 * z
        })
        .sum();
    nll / n + 0.5 * lambda * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Gradient of [`objective`], bias component last.
pub fn gradient(x: &[Vec<f64>], y: &[u8], lambda: f64, weights: &[f64], bias: f64) -> Vec<f64> {
    let n = x.len() as f64;
    let k = weights.len();
    let mut g = vec![0.0; k + 1];
    for (r, &l) in x.iter().zip(y) {
        let resid = sigmoid(linear(r, weights, bias)) - l as f64;
        for (gj, xj) in g.iter_mut().zip(r) {
            *gj += resid * xj;
        }
        g[k] += resid;
    }
    for (j, gj) in g.iter_mut().enumerate() {
        *gj /= n;
        if j < k {
            *gj += lambda * weights[j];
        }
    }
    g
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn fit_logreg_l2(x: &[Vec<f64>], y: &[u8], lambda: f64) -> Result<LogRegModel> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::LengthMismatch(n, y.len()));
    }
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: n });
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda {lambda} must be positive")));
    }
    let positives = y.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == n || y.iter().any(|&l| l > 1) {
        return Err(Error::SingleClass);
    }
    let k = x[0].len();
    if let Some(bad) = x.iter().position(|r| r.len() != k) {
        return Err(Error::InconsistentDimension {
            index: bad,
            expected: k,
            got: x[bad].len(),
        });
    }

    let nf = n as f64;
    let mut w = vec![0.0; k];
    let mut b = 0.0;
    let mut f = objective(x, y, lambda, &w, b);
    let mut g = gradient(x, y, lambda, &w, b);
    let mut gnorm = norm(&g);
    let mut iterations = 0;

    // aim for GRAD_TOL; a stalled line search or the iteration cap ends the
    // loop and the result is accepted within 1e-8 * max(1, n)
    while gnorm >= GRAD_TOL && iterations < MAX_ITER {
        iterations += 1;

        // Hessian over (w, b), bias last
        let mut h = DMatrix::<f64>::zeros(k + 1, k + 1);
        let mut aug = vec![0.0; k + 1];
        for r in x {
            let p = sigmoid(linear(r, &w, b));
            let s = p * (1.0 - p) / nf;
            aug[..k].copy_from_slice(r);
            aug[k] = 1.0;
            for i in 0..=k {
                let si = s * aug[i];
                for j in 0..=i {
                    h[(i, j)] += si * aug[j];
                }
            }
        }
        for i in 0..=k {
            for j in 0..i {
                h[(j, i)] = h[(i, j)];
            }
            h[(i, i)] += if i < k { lambda } else { 1e-12 };
        }
        let grad = DVector::from_column_slice(&g);
        let step = match h.cholesky() {
            Some(c) => c.solve(&grad),
            None => grad.clone(),
        };

        // backtracking on the Newton direction; stop once the predicted
        // decrease is below what the objective can resolve
        let slope: f64 = grad.dot(&step);
        if 0.5 * slope <= f64::EPSILON * f.abs() {
            break;
        }
        let mut t = 1.0;
        let (mut w_new, mut b_new, mut f_new);
        loop {
            w_new = w.iter().zip(step.iter()).map(|(a, d)| a - t * d).collect::<Vec<_>>();
            b_new = b - t * step[k];
            f_new = objective(x, y, lambda, &w_new, b_new);
            if f_new <= f - 1e-4 * t * slope || t < 1e-12 {
                break;
            }
            t *= 0.5;
        }
        if f_new > f {
            break;
        }
        w = w_new;
        b = b_new;
        f = f_new;
        g = gradient(x, y, lambda, &w, b);
        gnorm = norm(&g);
        if t < 1e-12 {
            break;
        }
    }

    if gnorm >= 1e-8 * nf.max(1.0) || w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(Error::NoConvergence {
            iterations,
            gradient_norm: gnorm,
        });
    }
    Ok(LogRegModel {
        weights: w,
        bias: b,
        lambda,
        iterations,
        gradient_norm: gnorm,
    })
}

impl LogRegModel {
    /// Probability of the positive class, kept strictly inside (0, 1).
    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        sigmoid(linear(row, &self.weights, self.bias)).clamp(f64::EPSILON, 1.0 - f64::EPSILON)
    }
}
