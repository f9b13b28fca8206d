use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{arm_rows, check_treatments, require_both_arms, with_treatment, CateModel, Variant};
use crate::baselearn::take_rows;
use crate::datagen::Estimand;
use crate::error::{ensure_same_len, Error, Result};
use crate::rsf::{fit_rsf, RsfParams};

pub const DEFAULT_MATCHING_K: usize = 5;

/// In-sample matching effects plus what is needed to answer out-of-sample queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingModel {
    pub k: usize,
    center: Vec<f64>,
    scale: Vec<f64>,
    /// Standardized training covariates, row-major.
    train_std: Vec<f64>,
    /// Per-training-unit effect `(mu_W - mu_{1-W}) (2W - 1)`.
    pub tau_train: Vec<f64>,
}

impl MatchingModel {
    fn standardize_row(&self, row: ArrayView1<f64>) -> Vec<f64> {
        row.iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    /// Effect of the nearest training unit (lowest index on distance ties).
    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let v: Vec<f64> = (0..x.nrows())
            .into_par_iter()
            .map(|i| {
                let q = self.standardize_row(x.row(i));
                let mut best = (f64::INFINITY, 0);
                for (j, t) in self.train_std.chunks_exact(q.len().max(1)).enumerate() {
                    let d: f64 = t.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum();
                    if d < best.0 {
                        best = (d, j);
                    }
                }
                self.tau_train[best.1]
            })
            .collect();
        Array1::from(v)
    }
}

fn standardize(x: ArrayView2<f64>) -> (Vec<f64>, Vec<f64>, Array2<f64>) {
    let (n, d) = x.dim();
    let mut center = vec![0.0; d];
    let mut scale = vec![1.0; d];
    for j in 0..d {
        let col = x.column(j);
        let m = col.sum() / n as f64;
        let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        center[j] = m;
        if sd > 1e-12 {
            scale[j] = sd;
        }
    }
    let z = Array2::from_shape_fn((n, d), |(i, j)| (x[[i, j]] - center[j]) / scale[j]);
    (center, scale, z)
}

/// Indices of the `k` rows of `pool` closest to `query` (ties broken by index).
fn nearest(z: &Array2<f64>, query: usize, pool: &[usize], k: usize) -> Vec<usize> {
    let q = z.row(query);
    let mut cand: Vec<(f64, usize)> = pool
        .iter()
        .map(|&j| {
            (
                z.row(j)
                    .iter()
                    .zip(q.iter())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum(),
                j,
            )
        })
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, cmp);
        cand.truncate(k);
    }
    cand.into_iter().map(|c| c.1).collect()
}

fn check_events(events: &[bool], rows: &[usize], arm: Option<u8>) -> Result<()> {
    if rows.iter().any(|&i| events[i]) {
        Ok(())
    } else {
        Err(arm.map_or(Error::NoEvents, |arm| Error::NoEventsInArm { arm }))
    }
}

/// Survival meta-learner on observed `(time, event)` outcomes.
#[allow(clippy::too_many_arguments)]
pub fn fit_survival_meta(
    variant: Variant,
    x: ArrayView2<f64>,
    w: &[u8],
    times: &[f64],
    events: &[bool],
    params: RsfParams,
    estimand: Estimand,
    horizon: f64,
    k: usize,
) -> Result<CateModel> {
    check_treatments(x, w, Some(times))?;
    ensure_same_len("times/events", times.len(), events.len())?;
    if !(horizon > 0.0) {
        return Err(Error::Domain(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let all: Vec<usize> = (0..w.len()).collect();
    let wf: Vec<f64> = w.iter().map(|&v| f64::from(v)).collect();
    match variant {
        Variant::S => {
            check_events(events, &all, None)?;
            let rsf = fit_rsf(with_treatment(x, &wf).view(), times, events, params)?;
            Ok(CateModel::SurvS {
                rsf,
                estimand,
                horizon,
            })
        }
        Variant::T => {
            require_both_arms(w)?;
            let mut fits = Vec::with_capacity(2);
            for arm in [0u8, 1] {
                let rows = arm_rows(w, arm);
                check_events(events, &rows, Some(arm))?;
                let t: Vec<f64> = rows.iter().map(|&i| times[i]).collect();
                let e: Vec<bool> = rows.iter().map(|&i| events[i]).collect();
                let p = RsfParams {
                    min_split: params.min_split.min(rows.len()),
                    ..params
                };
                fits.push(fit_rsf(take_rows(x, &rows).view(), &t, &e, p)?);
            }
            let rsf1 = fits.pop().expect("two arms");
            let rsf0 = fits.pop().expect("two arms");
            Ok(CateModel::SurvT {
                rsf0,
                rsf1,
                estimand,
                horizon,
            })
        }
        Variant::Matching => {
            require_both_arms(w)?;
            if k == 0 {
                return Err(Error::InvalidArgument("matching needs K >= 1".into()));
            }
            check_events(events, &all, None)?;
            let rsf = fit_rsf(with_treatment(x, &wf).view(), times, events, params)?;
            let factual = rsf.predict_functional(with_treatment(x, &wf).view(), estimand, horizon);
            let (center, scale, z) = standardize(x);
            let arms = [arm_rows(w, 0), arm_rows(w, 1)];
            let smallest = arms[0].len().min(arms[1].len());
            if k > smallest {
                log::warn!(
                    "matching K={k} exceeds the smaller arm ({smallest} units); clamping per arm"
                );
            }
            let tau_train: Vec<f64> = (0..w.len())
                .into_par_iter()
                .map(|i| {
                    let pool = &arms[usize::from(1 - w[i])];
                    let nbrs = nearest(&z, i, pool, k.min(pool.len()));
                    let counterfactual =
                        nbrs.iter().map(|&j| factual[j]).sum::<f64>() / nbrs.len() as f64;
                    (factual[i] - counterfactual) * (2.0 * wf[i] - 1.0)
                })
                .collect();
            Ok(CateModel::Matching(MatchingModel {
                k,
                center,
                scale,
                train_std: z.into_iter().collect(),
                tau_train,
            }))
        }
        other => Err(Error::InvalidArgument(format!(
            "variant {other} is not a survival meta-learner"
        ))),
    }
}
