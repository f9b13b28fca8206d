use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::meta::fit_propensity;
use super::{check_treatments, require_both_arms, CateModel, PropensityChoice};
use crate::baselearn::{fit_tuned, kfold_assignment, take_rows, Tuning, DEFAULT_CLIP};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream, Purpose};

pub const DML_BOOTSTRAP: usize = 100;
/// Per-fold variance of the residualized treatment below this means no overlap.
/// Fully determined assignment leaves about `1e-4` after clipping at 0.01.
const MIN_RESIDUAL_VAR: f64 = 1e-3;

/// Linear effect model `tau(x) = theta_0 + theta' x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmlModel {
    /// `[theta_0, theta_1, ..., theta_d]`.
    pub theta: Vec<f64>,
    /// Bootstrap standard errors of `theta`.
    pub theta_se: Vec<f64>,
    /// Average effect over the fitting sample.
    pub ate: f64,
    /// Percentile bootstrap 95% interval for `ate`.
    pub ate_ci: (f64, f64),
    pub n_folds: usize,
}

impl DmlModel {
    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        x.rows()
            .into_iter()
            .map(|r| {
                self.theta[0]
                    + r.iter()
                        .zip(&self.theta[1..])
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Least squares of `y_res` on `[w_res, w_res * x]` over `rows` (no intercept).
fn final_stage(
    x: ArrayView2<f64>,
    y_res: &[f64],
    w_res: &[f64],
    rows: &[usize],
) -> Option<Vec<f64>> {
    let d = x.ncols() + 1;
    let mut xtx = DMatrix::<f64>::zeros(d, d);
    let mut xty = DVector::<f64>::zeros(d);
    let mut z = vec![0.0; d];
    for &i in rows {
        z[0] = w_res[i];
        for j in 1..d {
            z[j] = w_res[i] * x[[i, j - 1]];
        }
        for a in 0..d {
            xty[a] += z[a] * y_res[i];
            for b in 0..=a {
                xtx[(a, b)] += z[a] * z[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            xtx[(b, a)] = xtx[(a, b)];
        }
    }
    let scale = (0..d).map(|a| xtx[(a, a)]).fold(0.0, f64::max).max(1.0);
    for a in 0..d {
        xtx[(a, a)] += 1e-12 * scale;
    }
    let sol = xtx.cholesky()?.solve(&xty);
    sol.iter()
        .all(|v| v.is_finite())
        .then(|| sol.iter().copied().collect())
}

fn mean_effect(theta: &[f64], x_mean: &[f64]) -> f64 {
    theta[0]
        + theta[1..]
            .iter()
            .zip(x_mean)
            .map(|(a, b)| a * b)
            .sum::<f64>()
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Double-ML with cross-fitted nuisances and a linear final stage.
pub fn fit_double_ml(
    x: ArrayView2<f64>,
    w: &[u8],
    y: &[f64],
    tuning: &Tuning,
    n_folds: usize,
    seed: u64,
) -> Result<CateModel> {
    check_treatments(x, w, Some(y))?;
    require_both_arms(w)?;
    if n_folds < 2 {
        return Err(Error::InvalidArgument(
            "Double-ML needs at least 2 folds".into(),
        ));
    }
    let n = w.len();
    let k = n_folds.min(n);
    let fold = kfold_assignment(n, k, derive_seed(seed, 1));
    let mut y_res = vec![0.0; n];
    let mut w_res = vec![0.0; n];
    for f in 0..k {
        let train: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
        let held: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
        let xt = take_rows(x, &train);
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let wt: Vec<u8> = train.iter().map(|&i| w[i]).collect();
        let q = fit_tuned(tuning, xt.view(), &yt, derive_seed(seed, 2))?;
        let g = fit_propensity(PropensityChoice::Logistic, DEFAULT_CLIP, xt.view(), &wt)?;
        let xh = take_rows(x, &held);
        let (qh, gh) = (q.predict(xh.view()), g.predict(xh.view()));
        for (j, &i) in held.iter().enumerate() {
            y_res[i] = y[i] - qh[j];
            w_res[i] = f64::from(w[i]) - gh[j];
        }
        let m = held.iter().map(|&i| w_res[i]).sum::<f64>() / held.len().max(1) as f64;
        let var =
            held.iter().map(|&i| (w_res[i] - m).powi(2)).sum::<f64>() / held.len().max(1) as f64;
        if held.is_empty() || var < MIN_RESIDUAL_VAR {
            return Err(Error::NoOverlap { fold: f });
        }
    }

    let all: Vec<usize> = (0..n).collect();
    let theta = final_stage(x, &y_res, &w_res, &all).ok_or(Error::NoOverlap { fold: 0 })?;
    let x_mean: Vec<f64> = (0..x.ncols())
        .map(|j| x.column(j).mean().unwrap_or(0.0))
        .collect();
    let ate = mean_effect(&theta, &x_mean);

    let mut rng = stream(seed, 0, Purpose::Bootstrap);
    let mut draws = Vec::with_capacity(DML_BOOTSTRAP);
    let mut ates = Vec::with_capacity(DML_BOOTSTRAP);
    for _ in 0..DML_BOOTSTRAP {
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        if let Some(t) = final_stage(x, &y_res, &w_res, &rows) {
            ates.push(mean_effect(&t, &x_mean));
            draws.push(t);
        }
    }
    let theta_se = (0..theta.len())
        .map(|j| {
            let m = draws.iter().map(|t| t[j]).sum::<f64>() / draws.len() as f64;
            (draws.iter().map(|t| (t[j] - m).powi(2)).sum::<f64>() / (draws.len() as f64 - 1.0))
                .sqrt()
        })
        .collect();
    ates.sort_by(f64::total_cmp);
    let ate_ci = if ates.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (percentile(&ates, 0.025), percentile(&ates, 0.975))
    };
    Ok(CateModel::DoubleMl(DmlModel {
        theta,
        theta_se,
        ate,
        ate_ci,
        n_folds: k,
    }))
}
