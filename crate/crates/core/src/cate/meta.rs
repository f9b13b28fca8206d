use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{
    arm_rows, check_treatments, require_both_arms, s_features, CateModel, FittedPropensity,
    PropensityChoice, Variant,
};
use crate::baselearn::{
    fit_logistic, fit_tuned, kfold_assignment, take_rows, Regressor, Tuning, DEFAULT_CLIP,
};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaOptions {
    pub propensity: PropensityChoice,
    pub clip: (f64, f64),
    /// Cross-fitting folds for DR nuisances.
    pub cross_fit_folds: usize,
    pub seed: u64,
}

impl Default for MetaOptions {
    fn default() -> Self {
        MetaOptions {
            propensity: PropensityChoice::Logistic,
            clip: DEFAULT_CLIP,
            cross_fit_folds: 2,
            seed: 0,
        }
    }
}

const ROLE_OUTCOME: u64 = 1;
const ROLE_EFFECT: u64 = 2;
const ROLE_FINAL: u64 = 3;
const ROLE_FOLDS: u64 = 4;

fn fit_arm(
    tuning: &Tuning,
    x: ArrayView2<f64>,
    y: &[f64],
    rows: &[usize],
    seed: u64,
) -> Result<Regressor> {
    let xa = take_rows(x, rows);
    let ya: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    fit_tuned(tuning, xa.view(), &ya, seed)
}

pub(crate) fn fit_propensity(
    choice: PropensityChoice,
    clip: (f64, f64),
    x: ArrayView2<f64>,
    w: &[u8],
) -> Result<FittedPropensity> {
    match choice {
        PropensityChoice::Logistic => fit_logistic(x, w, clip).map(FittedPropensity::Logistic),
        PropensityChoice::Known(p) if p > 0.0 && p < 1.0 => {
            Ok(FittedPropensity::Known(p.clamp(clip.0, clip.1)))
        }
        PropensityChoice::Known(p) => Err(Error::InvalidArgument(format!(
            "known propensity must lie in (0, 1), got {p}"
        ))),
    }
}

/// Meta-learner on fully observed (imputed) outcomes.
pub fn fit_imputed_meta(
    variant: Variant,
    x: ArrayView2<f64>,
    w: &[u8],
    y: &[f64],
    tuning: &Tuning,
    options: &MetaOptions,
) -> Result<CateModel> {
    check_treatments(x, w, Some(y))?;
    let seed = options.seed;
    match variant {
        Variant::S => {
            let wf: Vec<f64> = w.iter().map(|&v| f64::from(v)).collect();
            let mu = fit_tuned(
                tuning,
                s_features(x, &wf).view(),
                y,
                derive_seed(seed, ROLE_OUTCOME),
            )?;
            Ok(CateModel::SLearner { mu })
        }
        Variant::T => {
            require_both_arms(w)?;
            let s = derive_seed(seed, ROLE_OUTCOME);
            let mu0 = fit_arm(tuning, x, y, &arm_rows(w, 0), s)?;
            let mu1 = fit_arm(tuning, x, y, &arm_rows(w, 1), s)?;
            Ok(CateModel::TLearner { mu0, mu1 })
        }
        Variant::X => {
            require_both_arms(w)?;
            let (r0, r1) = (arm_rows(w, 0), arm_rows(w, 1));
            let s = derive_seed(seed, ROLE_OUTCOME);
            let mu0 = fit_arm(tuning, x, y, &r0, s)?;
            let mu1 = fit_arm(tuning, x, y, &r1, s)?;
            let x0 = take_rows(x, &r0);
            let x1 = take_rows(x, &r1);
            let d1: Vec<f64> = r1
                .iter()
                .zip(mu0.predict(x1.view()))
                .map(|(&i, m)| y[i] - m)
                .collect();
            let d0: Vec<f64> = r0
                .iter()
                .zip(mu1.predict(x0.view()))
                .map(|(&i, m)| m - y[i])
                .collect();
            let s = derive_seed(seed, ROLE_EFFECT);
            let tau1 = fit_tuned(tuning, x1.view(), &d1, s)?;
            let tau0 = fit_tuned(tuning, x0.view(), &d0, s)?;
            let g = fit_propensity(options.propensity, options.clip, x, w)?;
            Ok(CateModel::XLearner { tau0, tau1, g })
        }
        Variant::DR => {
            require_both_arms(w)?;
            let phi = dr_pseudo_outcomes(x, w, y, tuning, options)?;
            let tau = fit_tuned(
                tuning,
                x,
                phi.as_slice().expect("contiguous"),
                derive_seed(seed, ROLE_FINAL),
            )?;
            Ok(CateModel::DrLearner { tau })
        }
        other => Err(Error::InvalidArgument(format!(
            "variant {other} is not an imputed meta-learner"
        ))),
    }
}

/// Cross-fitted `Y1_dr - Y0_dr` for every unit.
pub(crate) fn dr_pseudo_outcomes(
    x: ArrayView2<f64>,
    w: &[u8],
    y: &[f64],
    tuning: &Tuning,
    options: &MetaOptions,
) -> Result<Array1<f64>> {
    let n = w.len();
    let k = options.cross_fit_folds.max(2).min(n);
    let fold = kfold_assignment(n, k, derive_seed(options.seed, ROLE_FOLDS));
    let mut phi = Array1::zeros(n);
    let s = derive_seed(options.seed, ROLE_OUTCOME);
    for f in 0..k {
        let train: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
        let held: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
        if held.is_empty() {
            continue;
        }
        let r0: Vec<usize> = train.iter().copied().filter(|&i| w[i] == 0).collect();
        let r1: Vec<usize> = train.iter().copied().filter(|&i| w[i] == 1).collect();
        if r0.is_empty() {
            return Err(Error::EmptyArm { arm: 0 });
        }
        if r1.is_empty() {
            return Err(Error::EmptyArm { arm: 1 });
        }
        let mu0 = fit_arm(tuning, x, y, &r0, s)?;
        let mu1 = fit_arm(tuning, x, y, &r1, s)?;
        let xt = take_rows(x, &train);
        let wt: Vec<u8> = train.iter().map(|&i| w[i]).collect();
        let g = fit_propensity(options.propensity, options.clip, xt.view(), &wt)?;
        let xh = take_rows(x, &held);
        let (m0, m1, gh) = (
            mu0.predict(xh.view()),
            mu1.predict(xh.view()),
            g.predict(xh.view()),
        );
        for (j, &i) in held.iter().enumerate() {
            let treated = f64::from(w[i]);
            let y1 = m1[j] + treated * (y[i] - m1[j]) / gh[j];
            let y0 = m0[j] + (1.0 - treated) * (y[i] - m0[j]) / (1.0 - gh[j]);
            phi[i] = y1 - y0;
        }
    }
    if phi.iter().any(|v: &f64| !v.is_finite()) {
        return Err(Error::NonFinite("doubly robust pseudo-outcomes"));
    }
    Ok(phi)
}
