//! Conditional average treatment effect estimators.
//!
//! Three families: meta-learners on imputed outcomes, Double-ML with a linear
//! effect model, and survival meta-learners built on random survival forests.

mod dml;
mod meta;
mod survival;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

pub use dml::{fit_double_ml, DmlModel, DML_BOOTSTRAP};
pub use meta::{fit_imputed_meta, MetaOptions};
pub use survival::{fit_survival_meta, MatchingModel, DEFAULT_MATCHING_K};

use crate::baselearn::{PropensityModel, Regressor};
use crate::datagen::io::{fmt_real, write_atomic};
use crate::datagen::Estimand;
use crate::error::{ensure_same_len, Error, Result};
use crate::rsf::RsfModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    ImputedMeta,
    DoubleMl,
    SurvMeta,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::ImputedMeta => "imputed_meta",
            Family::DoubleMl => "double_ml",
            Family::SurvMeta => "surv_meta",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "imputed_meta" | "meta" => Ok(Family::ImputedMeta),
            "double_ml" | "dml" => Ok(Family::DoubleMl),
            "surv_meta" | "survival" => Ok(Family::SurvMeta),
            _ => Err(Error::InvalidArgument(format!(
                "unknown estimator family '{s}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    S,
    T,
    X,
    #[serde(rename = "DR")]
    DR,
    Matching,
    /// The single Double-ML variant.
    Linear,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::S => "S",
            Variant::T => "T",
            Variant::X => "X",
            Variant::DR => "DR",
            Variant::Matching => "MATCHING",
            Variant::Linear => "LINEAR",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "S" => Ok(Variant::S),
            "T" => Ok(Variant::T),
            "X" => Ok(Variant::X),
            "DR" => Ok(Variant::DR),
            "MATCHING" => Ok(Variant::Matching),
            "LINEAR" => Ok(Variant::Linear),
            _ => Err(Error::InvalidArgument(format!(
                "unknown estimator variant '{s}'"
            ))),
        }
    }
}

/// How the treatment probability enters the X- and DR-learners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PropensityChoice {
    Logistic,
    /// A known design probability (randomized trials).
    Known(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedPropensity {
    Logistic(PropensityModel),
    Known(f64),
}

impl FittedPropensity {
    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        match self {
            FittedPropensity::Logistic(m) => m.predict(x),
            FittedPropensity::Known(p) => Array1::from_elem(x.nrows(), *p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CateModel {
    SLearner {
        mu: Regressor,
    },
    TLearner {
        mu0: Regressor,
        mu1: Regressor,
    },
    XLearner {
        tau0: Regressor,
        tau1: Regressor,
        g: FittedPropensity,
    },
    DrLearner {
        tau: Regressor,
    },
    DoubleMl(DmlModel),
    SurvS {
        rsf: RsfModel,
        estimand: Estimand,
        horizon: f64,
    },
    SurvT {
        rsf0: RsfModel,
        rsf1: RsfModel,
        estimand: Estimand,
        horizon: f64,
    },
    Matching(MatchingModel),
}

impl CateModel {
    pub fn family(&self) -> Family {
        match self {
            CateModel::SLearner { .. }
            | CateModel::TLearner { .. }
            | CateModel::XLearner { .. }
            | CateModel::DrLearner { .. } => Family::ImputedMeta,
            CateModel::DoubleMl(_) => Family::DoubleMl,
            CateModel::SurvS { .. } | CateModel::SurvT { .. } | CateModel::Matching(_) => {
                Family::SurvMeta
            }
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            CateModel::SLearner { .. } | CateModel::SurvS { .. } => Variant::S,
            CateModel::TLearner { .. } | CateModel::SurvT { .. } => Variant::T,
            CateModel::XLearner { .. } => Variant::X,
            CateModel::DrLearner { .. } => Variant::DR,
            CateModel::DoubleMl(_) => Variant::Linear,
            CateModel::Matching(_) => Variant::Matching,
        }
    }

    /// `tau_hat(x)` for every row of `x` (covariates only, no treatment column).
    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        match self {
            CateModel::SLearner { mu } => {
                let n = x.nrows();
                mu.predict(s_features(x, &vec![1.0; n]).view())
                    - mu.predict(s_features(x, &vec![0.0; n]).view())
            }
            CateModel::TLearner { mu0, mu1 } => mu1.predict(x) - mu0.predict(x),
            CateModel::XLearner { tau0, tau1, g } => {
                let g = g.predict(x);
                let t0 = tau0.predict(x);
                let t1 = tau1.predict(x);
                &g * &t0 + &(1.0 - &g) * &t1
            }
            CateModel::DrLearner { tau } => tau.predict(x),
            CateModel::DoubleMl(m) => m.predict(x),
            CateModel::SurvS {
                rsf,
                estimand,
                horizon,
            } => {
                let n = x.nrows();
                let x1 = with_treatment(x, &vec![1.0; n]);
                let x0 = with_treatment(x, &vec![0.0; n]);
                rsf.predict_functional(x1.view(), *estimand, *horizon)
                    - rsf.predict_functional(x0.view(), *estimand, *horizon)
            }
            CateModel::SurvT {
                rsf0,
                rsf1,
                estimand,
                horizon,
            } => {
                rsf1.predict_functional(x, *estimand, *horizon)
                    - rsf0.predict_functional(x, *estimand, *horizon)
            }
            CateModel::Matching(m) => m.predict(x),
        }
    }
}

/// `[X, w]`, the design of survival S-learners.
pub(crate) fn with_treatment(x: ArrayView2<f64>, w: &[f64]) -> Array2<f64> {
    let col = Array2::from_shape_vec((w.len(), 1), w.to_vec()).expect("column shape");
    concatenate(Axis(1), &[x, col.view()]).expect("row counts match")
}

/// `[X, w, w * X]`: the treatment column plus its interactions, so a linear
/// base learner can express effects that vary with `x`.
pub(crate) fn s_features(x: ArrayView2<f64>, w: &[f64]) -> Array2<f64> {
    let (n, d) = x.dim();
    Array2::from_shape_fn((n, 2 * d + 1), |(i, j)| {
        if j < d {
            x[[i, j]]
        } else if j == d {
            w[i]
        } else {
            w[i] * x[[i, j - d - 1]]
        }
    })
}

pub(crate) fn arm_rows(w: &[u8], arm: u8) -> Vec<usize> {
    (0..w.len()).filter(|&i| w[i] == arm).collect()
}

pub(crate) fn check_treatments(x: ArrayView2<f64>, w: &[u8], y: Option<&[f64]>) -> Result<()> {
    ensure_same_len("X rows/w", x.nrows(), w.len())?;
    if let Some(y) = y {
        ensure_same_len("w/y", w.len(), y.len())?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("outcomes"));
        }
    }
    if w.is_empty() {
        return Err(Error::EmptyRequest(
            "effect estimation needs at least one unit",
        ));
    }
    if w.iter().any(|&v| v > 1) {
        return Err(Error::Domain("treatment must be 0 or 1".into()));
    }
    Ok(())
}

pub(crate) fn require_both_arms(w: &[u8]) -> Result<()> {
    for arm in [0u8, 1] {
        if !w.contains(&arm) {
            return Err(Error::EmptyArm { arm });
        }
    }
    Ok(())
}

/// One emitted per-unit effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CateRow {
    pub id: usize,
    pub tau_hat: f64,
    pub tau_true: f64,
    pub method: String,
    pub variant: String,
    pub imputer: String,
    pub base_learner: String,
}

pub const CATE_CSV_HEADER: &str = "id,tau_hat,tau_true,method,variant,imputer,base_learner";

pub fn render_cate_csv(rows: &[CateRow]) -> String {
    let mut out = String::from(CATE_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.id,
            fmt_real(r.tau_hat),
            fmt_real(r.tau_true),
            r.method,
            r.variant,
            r.imputer,
            r.base_learner
        ));
    }
    out
}

pub fn write_cate_csv(rows: &[CateRow], path: &Path) -> Result<()> {
    write_atomic(path, render_cate_csv(rows).as_bytes())
}
