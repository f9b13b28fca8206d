use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_len, Error, Result};

pub const DEFAULT_CLIP: (f64, f64) = (0.01, 0.99);
const GRAD_TOL: f64 = 1e-8;
const JITTER: f64 = 1e-8;
const MAX_NEWTON: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub clip: (f64, f64),
}

impl PropensityModel {
    /// A model that predicts `p` (clipped) everywhere.
    pub fn constant(p: f64, d: usize, clip: (f64, f64)) -> Self {
        let p = p.clamp(clip.0, clip.1);
        PropensityModel {
            intercept: (p / (1.0 - p)).ln(),
            coefficients: vec![0.0; d],
            clip,
        }
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let eta = self.intercept
            + row
                .iter()
                .zip(&self.coefficients)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        sigmoid(eta).clamp(self.clip.0, self.clip.1)
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        x.rows().into_iter().map(|r| self.predict_row(r)).collect()
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(eta))` without overflow.
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn design(x: ArrayView2<f64>) -> DMatrix<f64> {
    let (n, d) = x.dim();
    DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { x[[i, j - 1]] })
}

fn loglik(a: &DMatrix<f64>, w: &[f64], beta: &DVector<f64>) -> f64 {
    let eta = a * beta;
    eta.iter().zip(w).map(|(e, y)| y * e - softplus(*e)).sum()
}

pub(crate) struct NewtonTrace {
    pub model: PropensityModel,
    #[cfg_attr(not(test), allow(dead_code))]
    pub loglik: Vec<f64>,
}

pub(crate) fn fit_logistic_traced(
    x: ArrayView2<f64>,
    w: &[u8],
    clip: (f64, f64),
) -> Result<NewtonTrace> {
    ensure_same_len("X rows/labels", x.nrows(), w.len())?;
    if w.is_empty() {
        return Err(Error::EmptyRequest(
            "logistic regression needs at least one row",
        ));
    }
    if !(0.0 < clip.0 && clip.0 <= clip.1 && clip.1 < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "invalid clip bounds {clip:?}"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logistic features"));
    }
    if w.iter().any(|&v| v > 1) {
        return Err(Error::Domain("labels must be 0 or 1".into()));
    }
    let d = x.ncols();
    let positives = w.iter().filter(|&&v| v == 1).count();
    if positives == 0 || positives == w.len() {
        let rate = positives as f64 / w.len() as f64;
        return Ok(NewtonTrace {
            model: PropensityModel::constant(rate, d, clip),
            loglik: Vec::new(),
        });
    }

    let a = design(x);
    let y: Vec<f64> = w.iter().map(|&v| f64::from(v)).collect();
    let mut beta = DVector::zeros(d + 1);
    let rate = positives as f64 / w.len() as f64;
    beta[0] = (rate / (1.0 - rate)).ln();
    let mut ll = loglik(&a, &y, &beta);
    let mut trace = vec![ll];

    for _ in 0..MAX_NEWTON {
        let eta = &a * &beta;
        let p: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let resid = DVector::from_iterator(y.len(), y.iter().zip(&p).map(|(t, q)| t - q));
        let grad = a.transpose() * &resid;
        if grad.norm() < GRAD_TOL {
            break;
        }
        let mut weighted = a.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            row *= p[i] * (1.0 - p[i]);
        }
        let mut hess = a.transpose() * weighted;
        for j in 0..=d {
            hess[(j, j)] += JITTER;
        }
        let Some(step) = hess.cholesky().map(|c| c.solve(&grad)) else {
            break;
        };
        // backtracking keeps the log-likelihood non-decreasing
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-10 {
            let cand = &beta + &step * t;
            let cand_ll = loglik(&a, &y, &cand);
            if cand_ll >= ll {
                beta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        trace.push(ll);
    }

    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFinite("logistic coefficients"));
    }
    Ok(NewtonTrace {
        model: PropensityModel {
            intercept: beta[0],
            coefficients: beta.iter().skip(1).copied().collect(),
            clip,
        },
        loglik: trace,
    })
}

/// Maximum-likelihood logistic regression by damped Newton iterations.
pub fn fit_logistic(x: ArrayView2<f64>, w: &[u8], clip: (f64, f64)) -> Result<PropensityModel> {
    fit_logistic_traced(x, w, clip).map(|t| t.model)
}
