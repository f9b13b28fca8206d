//! Regression and propensity learners used by the effect estimators.

mod forest;
mod lasso;
mod logistic;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use forest::{fit_random_forest, ForestModel, ForestParams, RegressionTree};
pub use lasso::{fit_lasso, LinearModel, LASSO_MAX_SWEEPS, LASSO_TOL};
pub use logistic::{fit_logistic, PropensityModel, DEFAULT_CLIP};

pub(crate) use forest::mtry;

use crate::error::{ensure_same_len, Error, Result};
use crate::rng::{stream, Purpose};

pub const LASSO_ALPHAS: [f64; 5] = [0.001, 0.01, 0.1, 1.0, 10.0];
pub const FOREST_TREES: [usize; 2] = [50, 100];
pub const FOREST_DEPTHS: [Option<usize>; 3] = [Some(3), Some(5), None];
pub const CV_FOLDS: usize = 5;

pub(crate) fn check_inputs(x: ArrayView2<f64>, y: &[f64]) -> Result<()> {
    ensure_same_len("X rows/y", x.nrows(), y.len())?;
    if y.is_empty() {
        return Err(Error::EmptyRequest("regression needs at least one row"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression features"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression targets"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LearnerKind {
    #[serde(rename = "lasso")]
    Lasso,
    #[serde(rename = "rf", alias = "random_forest")]
    RandomForest,
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LearnerKind::Lasso => "lasso",
            LearnerKind::RandomForest => "rf",
        })
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lasso" => Ok(LearnerKind::Lasso),
            "rf" | "random_forest" | "randomforest" | "forest" => Ok(LearnerKind::RandomForest),
            _ => Err(Error::InvalidArgument(format!(
                "unknown base learner '{s}'"
            ))),
        }
    }
}

/// One concrete hyperparameter setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LearnerSpec {
    Lasso {
        alpha: f64,
    },
    Forest {
        n_trees: usize,
        max_depth: Option<usize>,
        min_split: usize,
        min_leaf: usize,
    },
}

impl LearnerSpec {
    pub fn kind(&self) -> LearnerKind {
        match self {
            LearnerSpec::Lasso { .. } => LearnerKind::Lasso,
            LearnerSpec::Forest { .. } => LearnerKind::RandomForest,
        }
    }

    pub fn forest(n_trees: usize, max_depth: Option<usize>) -> Self {
        LearnerSpec::Forest {
            n_trees,
            max_depth,
            min_split: 2,
            min_leaf: 1,
        }
    }
}

impl fmt::Display for LearnerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnerSpec::Lasso { alpha } => write!(f, "lasso(alpha={alpha})"),
            LearnerSpec::Forest {
                n_trees, max_depth, ..
            } => match max_depth {
                Some(d) => write!(f, "rf(trees={n_trees},depth={d})"),
                None => write!(f, "rf(trees={n_trees},depth=None)"),
            },
        }
    }
}

/// Default grid, ordered from strongest to weakest regularization.
pub fn default_grid(kind: LearnerKind) -> Vec<LearnerSpec> {
    match kind {
        LearnerKind::Lasso => LASSO_ALPHAS
            .iter()
            .rev()
            .map(|&alpha| LearnerSpec::Lasso { alpha })
            .collect(),
        LearnerKind::RandomForest => FOREST_DEPTHS
            .iter()
            .flat_map(|&d| FOREST_TREES.iter().map(move |&t| LearnerSpec::forest(t, d)))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Tuning {
    Fixed(LearnerSpec),
    /// Pick from the grid by k-fold CV. Earlier entries win ties.
    GridCv {
        kind: LearnerKind,
        grid: Vec<LearnerSpec>,
    },
}

impl Tuning {
    pub fn grid(kind: LearnerKind) -> Self {
        Tuning::GridCv {
            kind,
            grid: default_grid(kind),
        }
    }

    pub fn kind(&self) -> LearnerKind {
        match self {
            Tuning::Fixed(s) => s.kind(),
            Tuning::GridCv { kind, .. } => *kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Regressor {
    Linear(LinearModel),
    Forest(ForestModel),
}

impl Regressor {
    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        match self {
            Regressor::Linear(m) => m.predict(x),
            Regressor::Forest(m) => m.predict(x),
        }
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        match self {
            Regressor::Linear(m) => m.predict_row(row),
            Regressor::Forest(m) => m.predict_row(row),
        }
    }
}

pub fn fit_spec(spec: &LearnerSpec, x: ArrayView2<f64>, y: &[f64], seed: u64) -> Result<Regressor> {
    match *spec {
        LearnerSpec::Lasso { alpha } => fit_lasso(x, y, alpha).map(Regressor::Linear),
        LearnerSpec::Forest {
            n_trees,
            max_depth,
            min_split,
            min_leaf,
        } => {
            let params = ForestParams {
                n_trees,
                max_depth,
                // tiny arms (e.g. treated units under a 5% design) still get a model
                min_split: min_split.min(y.len()).max(1),
                min_leaf,
                seed,
            };
            fit_random_forest(x, y, params).map(Regressor::Forest)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best: LearnerSpec,
    /// Mean held-out MSE per grid entry, in grid order.
    pub scores: Vec<f64>,
}

/// Seeded assignment of `n` rows to `k` folds of near-equal size.
pub fn kfold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, 0, Purpose::Folds));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    fold
}

pub(crate) fn take_rows(x: ArrayView2<f64>, rows: &[usize]) -> Array2<f64> {
    x.select(Axis(0), rows)
}

pub fn cross_validate(
    grid: &[LearnerSpec],
    x: ArrayView2<f64>,
    y: &[f64],
    k: usize,
    seed: u64,
) -> Result<CvResult> {
    check_inputs(x, y)?;
    if grid.is_empty() {
        return Err(Error::EmptyRequest("hyperparameter grid is empty"));
    }
    let n = y.len();
    let k = k.min(n);
    if k < 2 {
        return Ok(CvResult {
            best: grid[0],
            scores: vec![f64::NAN; grid.len()],
        });
    }
    let fold = kfold_assignment(n, k, seed);
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..k).map(move |f| (g, f)))
        .collect();
    let errors: Vec<(usize, f64)> = jobs
        .par_iter()
        .map(|&(g, f)| -> Result<(usize, f64)> {
            let train: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
            let xt = take_rows(x, &train);
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let model = fit_spec(&grid[g], xt.view(), &yt, seed)?;
            let pred = model.predict(take_rows(x, &test).view());
            let sse: f64 = test
                .iter()
                .zip(pred.iter())
                .map(|(&i, p)| (y[i] - p).powi(2))
                .sum();
            Ok((g, sse))
        })
        .collect::<Result<_>>()?;
    let mut scores = vec![0.0; grid.len()];
    for (g, sse) in errors {
        scores[g] += sse;
    }
    for s in &mut scores {
        *s /= n as f64;
    }
    let mut best = 0;
    for g in 1..grid.len() {
        if scores[g] < scores[best] {
            best = g;
        }
    }
    Ok(CvResult {
        best: grid[best],
        scores,
    })
}

/// Fit under a tuning rule; grid search refits the winner on all rows.
pub fn fit_tuned(tuning: &Tuning, x: ArrayView2<f64>, y: &[f64], seed: u64) -> Result<Regressor> {
    match tuning {
        Tuning::Fixed(spec) => fit_spec(spec, x, y, seed),
        Tuning::GridCv { grid, .. } => {
            let cv = cross_validate(grid, x, y, CV_FOLDS, seed)?;
            fit_spec(&cv.best, x, y, seed)
        }
    }
}
