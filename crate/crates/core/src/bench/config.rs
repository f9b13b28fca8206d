use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselearn::LearnerKind;
use crate::cate::{Family, Variant, DEFAULT_MATCHING_K};
use crate::datagen::{CausalConfig, Estimand, HorizonRule, Scenario};
use crate::error::{Error, Result};
use crate::impute::ImputeMethod;
use crate::metrics::MethodKey;

/// One method cell of the roster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RosterEntry {
    pub family: Family,
    pub variant: Variant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imputer: Option<ImputeMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_learner: Option<LearnerKind>,
}

impl RosterEntry {
    pub fn imputed(variant: Variant, imputer: ImputeMethod, base_learner: LearnerKind) -> Self {
        RosterEntry {
            family: Family::ImputedMeta,
            variant,
            imputer: Some(imputer),
            base_learner: Some(base_learner),
        }
    }

    pub fn double_ml(imputer: ImputeMethod, base_learner: LearnerKind) -> Self {
        RosterEntry {
            family: Family::DoubleMl,
            variant: Variant::Linear,
            imputer: Some(imputer),
            base_learner: Some(base_learner),
        }
    }

    pub fn survival(variant: Variant) -> Self {
        RosterEntry {
            family: Family::SurvMeta,
            variant,
            imputer: None,
            base_learner: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok_variant = match self.family {
            Family::ImputedMeta => matches!(
                self.variant,
                Variant::S | Variant::T | Variant::X | Variant::DR
            ),
            Family::DoubleMl => self.variant == Variant::Linear,
            Family::SurvMeta => matches!(self.variant, Variant::S | Variant::T | Variant::Matching),
        };
        if !ok_variant {
            return Err(Error::InvalidArgument(format!(
                "variant {} does not belong to family {}",
                self.variant, self.family
            )));
        }
        let needs_outcome = self.family != Family::SurvMeta;
        if needs_outcome != self.imputer.is_some() || needs_outcome != self.base_learner.is_some() {
            return Err(Error::InvalidArgument(format!(
                "{}: imputer and base learner are required for {} and not allowed otherwise",
                self, self.family
            )));
        }
        Ok(())
    }

    pub fn method_key(&self) -> MethodKey {
        MethodKey {
            family: self.family.to_string(),
            variant: self.variant.to_string(),
            imputer: self.imputer.map(|m| m.to_string()).unwrap_or_default(),
            base_learner: match self.base_learner {
                Some(b) => b.to_string(),
                None => "rsf".into(),
            },
        }
    }
}

impl fmt::Display for RosterEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.method_key().fmt(f)
    }
}

/// Every implemented cell: imputed S/T/X/DR and Double-ML over all imputers
/// and both base learners, plus the three survival learners.
pub fn full_roster() -> Vec<RosterEntry> {
    let mut out = Vec::new();
    for bl in [LearnerKind::Lasso, LearnerKind::RandomForest] {
        for imp in ImputeMethod::ALL {
            for v in [Variant::S, Variant::T, Variant::X, Variant::DR] {
                out.push(RosterEntry::imputed(v, imp, bl));
            }
            out.push(RosterEntry::double_ml(imp, bl));
        }
    }
    out.extend([Variant::S, Variant::T, Variant::Matching].map(RosterEntry::survival));
    out
}

/// How many hyperparameter settings each cell tries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridPolicy {
    /// The full published grids.
    #[default]
    Full,
    /// Lasso keeps its alpha grid; forests and survival forests use one setting.
    Reduced,
}

/// What the rank table compares.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum RankLevel {
    /// Every roster cell is its own method.
    Cell,
    /// One method per family and variant, with imputer and base learner chosen on validation.
    #[default]
    Family,
}

impl fmt::Display for RankLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RankLevel::Cell => "cell",
            RankLevel::Family => "family",
        })
    }
}

impl std::str::FromStr for RankLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cell" => Ok(RankLevel::Cell),
            "family" => Ok(RankLevel::Family),
            _ => Err(Error::InvalidArgument(format!("unknown rank level '{s}'"))),
        }
    }
}

fn default_n_train() -> usize {
    5000
}
fn default_n_holdout() -> usize {
    2500
}
fn default_pool() -> usize {
    50_000
}
fn default_repeats() -> usize {
    10
}
fn default_k() -> usize {
    DEFAULT_MATCHING_K
}
fn default_folds() -> usize {
    2
}
fn default_top_k() -> Vec<usize> {
    vec![1, 3, 5]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenarios: Vec<Scenario>,
    pub configs: Vec<CausalConfig>,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_holdout")]
    pub n_val: usize,
    #[serde(default = "default_n_holdout")]
    pub n_test: usize,
    #[serde(default = "default_pool")]
    pub pool_size: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_estimand")]
    pub estimand: Estimand,
    #[serde(default = "default_horizon")]
    pub horizon: HorizonRule,
    #[serde(default = "full_roster")]
    pub roster: Vec<RosterEntry>,
    #[serde(default = "default_k")]
    pub matching_k: usize,
    #[serde(default = "default_folds")]
    pub cross_fit_folds: usize,
    #[serde(default)]
    pub grid: GridPolicy,
    #[serde(default)]
    pub rank_level: RankLevel,
    #[serde(default = "default_top_k")]
    pub top_k: Vec<usize>,
    /// Draw a fresh pool per repeat instead of resampling one pool.
    #[serde(default)]
    pub regenerate_pool: bool,
    /// Rank over the datasets where every method succeeded.
    #[serde(default)]
    pub allow_missing: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_estimand() -> Estimand {
    Estimand::Rmst
}
fn default_horizon() -> HorizonRule {
    HorizonRule::MaxObserved
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenarios: Scenario::ALL.to_vec(),
            configs: CausalConfig::benchmark_set(),
            n_train: default_n_train(),
            n_val: default_n_holdout(),
            n_test: default_n_holdout(),
            pool_size: default_pool(),
            repeats: default_repeats(),
            seed: 0,
            estimand: default_estimand(),
            horizon: default_horizon(),
            roster: full_roster(),
            matching_k: default_k(),
            cross_fit_folds: default_folds(),
            grid: GridPolicy::default(),
            rank_level: RankLevel::default(),
            top_k: default_top_k(),
            regenerate_pool: false,
            allow_missing: false,
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() || self.configs.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one scenario and one configuration are required".into(),
            ));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidArgument("repeats must be at least 1".into()));
        }
        if self.n_train == 0 || self.n_val == 0 || self.n_test == 0 {
            return Err(Error::InvalidArgument(
                "split sizes must be positive".into(),
            ));
        }
        let need = self.n_train + self.n_val + self.n_test;
        if need > self.pool_size {
            return Err(Error::InvalidArgument(format!(
                "splits need {need} units but the pool holds {}",
                self.pool_size
            )));
        }
        if self.matching_k == 0 {
            return Err(Error::InvalidArgument(
                "matching_k must be at least 1".into(),
            ));
        }
        if self.cross_fit_folds < 2 {
            return Err(Error::InvalidArgument(
                "cross_fit_folds must be at least 2".into(),
            ));
        }
        if let HorizonRule::Fixed(h) = self.horizon {
            if !(h > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "fixed horizon must be > 0, got {h}"
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for e in &self.roster {
            e.validate()?;
            if !seen.insert(*e) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate roster entry {e}"
                )));
            }
        }
        Ok(())
    }
}
