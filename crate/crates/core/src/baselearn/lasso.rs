use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::check_inputs;
use crate::error::{Error, Result};

pub const LASSO_TOL: f64 = 1e-7;
pub const LASSO_MAX_SWEEPS: usize = 10_000;

/// Affine predictor `intercept + coefficients . x`, on the original feature scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub alpha: f64,
    /// Column means and standard deviations used for the internal standardization.
    pub(crate) center: Vec<f64>,
    pub(crate) scale: Vec<f64>,
    pub sweeps: usize,
}

impl LinearModel {
    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        x.rows().into_iter().map(|r| self.predict_row(r)).collect()
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        self.intercept
            + row
                .iter()
                .zip(&self.coefficients)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    /// Coefficients on the standardized scale the penalty is applied to.
    pub fn standardized_coefficients(&self) -> Vec<f64> {
        self.coefficients
            .iter()
            .zip(&self.scale)
            .map(|(b, s)| b * s)
            .collect()
    }

    /// `(1/2n)||y - b0 - Zb||^2 + alpha ||b||_1` with `Z` the standardized features.
    pub fn objective(&self, x: ArrayView2<f64>, y: &[f64]) -> f64 {
        let pred = self.predict(x);
        let rss: f64 = pred.iter().zip(y).map(|(p, t)| (t - p).powi(2)).sum();
        let l1: f64 = self
            .standardized_coefficients()
            .iter()
            .map(|b| b.abs())
            .sum();
        rss / (2.0 * y.len() as f64) + self.alpha * l1
    }

    /// Largest `|(1/n) z_j' r| - alpha` over zero coefficients (the KKT residual).
    pub fn kkt_violation(&self, x: ArrayView2<f64>, y: &[f64]) -> f64 {
        let n = y.len() as f64;
        let pred = self.predict(x);
        let resid: Vec<f64> = y.iter().zip(pred.iter()).map(|(t, p)| t - p).collect();
        let mut worst = f64::NEG_INFINITY;
        for (j, &b) in self.coefficients.iter().enumerate() {
            if b != 0.0 || self.scale[j] == 0.0 {
                continue;
            }
            let g: f64 = x
                .column(j)
                .iter()
                .zip(&resid)
                .map(|(v, r)| (v - self.center[j]) / self.scale[j] * r)
                .sum::<f64>()
                / n;
            worst = worst.max(g.abs() - self.alpha);
        }
        worst
    }
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Cyclic coordinate descent on standardized features.
pub fn fit_lasso(x: ArrayView2<f64>, y: &[f64], alpha: f64) -> Result<LinearModel> {
    check_inputs(x, y)?;
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lasso alpha must be finite and >= 0, got {alpha}"
        )));
    }
    let (n, d) = x.dim();
    let nf = n as f64;
    let y_mean = y.iter().sum::<f64>() / nf;

    let mut center = vec![0.0; d];
    let mut scale = vec![0.0; d];
    // column-major standardized copy
    let mut z: Vec<Vec<f64>> = Vec::with_capacity(d);
    for j in 0..d {
        let col = x.column(j);
        let m = col.sum() / nf;
        let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / nf).sqrt();
        center[j] = m;
        scale[j] = if sd > 1e-12 { sd } else { 0.0 };
        z.push(if scale[j] > 0.0 {
            col.iter().map(|v| (v - m) / sd).collect()
        } else {
            vec![0.0; n]
        });
    }

    let mut beta = vec![0.0; d];
    let mut resid: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let mut sweeps = 0;
    while sweeps < LASSO_MAX_SWEEPS {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..d {
            if scale[j] == 0.0 {
                continue;
            }
            let zj = &z[j];
            let rho = zj.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / nf + beta[j];
            let updated = soft_threshold(rho, alpha);
            let delta = updated - beta[j];
            if delta != 0.0 {
                for (r, a) in resid.iter_mut().zip(zj) {
                    *r -= delta * a;
                }
                beta[j] = updated;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < LASSO_TOL {
            break;
        }
    }

    let coefficients: Vec<f64> = (0..d)
        .map(|j| {
            if scale[j] > 0.0 {
                beta[j] / scale[j]
            } else {
                0.0
            }
        })
        .collect();
    let intercept = y_mean
        - coefficients
            .iter()
            .zip(&center)
            .map(|(b, m)| b * m)
            .sum::<f64>();
    if !intercept.is_finite() || coefficients.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFinite("lasso coefficients"));
    }
    Ok(LinearModel {
        intercept,
        coefficients,
        alpha,
        center,
        scale,
        sweeps,
    })
}
