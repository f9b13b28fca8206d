//! Seeded synthetic survival datasets with known potential outcomes.
//!
//! A dataset is addressed by a [`DatasetSpec`]: survival scenario, causal
//! configuration, size, seed, estimand and horizon rule. Each unit draws from
//! its own counter-based substreams, so generation is order-independent and
//! runs in parallel without changing a single bit of the output.

pub(crate) mod io;
mod laws;
mod truth;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

pub use io::{read_dataset_csv, write_dataset_csv, DATASET_CSV_HEADER};
pub use laws::{
    censoring_time, generate_potential_outcomes, propensity_score, ArmLaw, InformativeLaw,
};
pub use truth::{population_ate, true_cate, true_cate_marginal_u, true_cate_with_params};

pub const N_COVARIATES: usize = 5;
pub const N_LATENTS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    A,
    B,
    C,
    D,
    E,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::A,
        Scenario::B,
        Scenario::C,
        Scenario::D,
        Scenario::E,
    ];

    pub fn is_poisson(self) -> bool {
        matches!(self, Scenario::C | Scenario::E)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scenario::A => "A",
            Scenario::B => "B",
            Scenario::C => "C",
            Scenario::D => "D",
            Scenario::E => "E",
        };
        f.write_str(s)
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Scenario::A),
            "B" => Ok(Scenario::B),
            "C" => Ok(Scenario::C),
            "D" => Ok(Scenario::D),
            "E" => Ok(Scenario::E),
            other => Err(Error::InvalidArgument(format!(
                "unknown scenario '{other}'"
            ))),
        }
    }
}

/// Treatment assignment mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CausalKind {
    Rct50,
    Rct5,
    ObsCps,
    ObsUconf,
    ObsNopos,
}

impl CausalKind {
    pub fn is_rct(self) -> bool {
        matches!(self, CausalKind::Rct50 | CausalKind::Rct5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CausalConfig {
    pub kind: CausalKind,
    pub informative_censoring: bool,
    /// Censoring driven by the latent confounder `U1` (only with `ObsUconf`).
    pub latent_censoring: bool,
}

impl CausalConfig {
    pub fn new(
        kind: CausalKind,
        informative_censoring: bool,
        latent_censoring: bool,
    ) -> Result<Self> {
        if latent_censoring && (kind != CausalKind::ObsUconf || informative_censoring) {
            return Err(Error::InvalidArgument(
                "latent censoring requires OBS-UConf without informative censoring".into(),
            ));
        }
        if informative_censoring && kind.is_rct() {
            return Err(Error::InvalidArgument(
                "informative censoring is only defined for observational configurations".into(),
            ));
        }
        Ok(CausalConfig {
            kind,
            informative_censoring,
            latent_censoring,
        })
    }

    pub const fn ignorable(kind: CausalKind) -> Self {
        CausalConfig {
            kind,
            informative_censoring: false,
            latent_censoring: false,
        }
    }

    /// The eight benchmark configurations in their usual table order.
    pub fn benchmark_set() -> Vec<CausalConfig> {
        use CausalKind::*;
        let mut out: Vec<CausalConfig> = [Rct50, Rct5, ObsCps, ObsUconf, ObsNopos]
            .into_iter()
            .map(CausalConfig::ignorable)
            .collect();
        for kind in [ObsCps, ObsUconf, ObsNopos] {
            out.push(CausalConfig {
                kind,
                informative_censoring: true,
                latent_censoring: false,
            });
        }
        out
    }
}

impl fmt::Display for CausalConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.kind {
            CausalKind::Rct50 => "RCT-50",
            CausalKind::Rct5 => "RCT-5",
            CausalKind::ObsCps => "OBS-CPS",
            CausalKind::ObsUconf => "OBS-UConf",
            CausalKind::ObsNopos => "OBS-NoPos",
        };
        f.write_str(base)?;
        if self.informative_censoring {
            f.write_str("-InfC")?;
        }
        if self.latent_censoring {
            f.write_str("-LatC")?;
        }
        Ok(())
    }
}

impl FromStr for CausalConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        let (body, latent) = match norm.strip_suffix("-latc") {
            Some(b) => (b, true),
            None => (norm.as_str(), false),
        };
        let (body, informative) = match body.strip_suffix("-infc") {
            Some(b) => (b, true),
            None => (body, false),
        };
        let kind = match body {
            "rct-50" | "rct50" => CausalKind::Rct50,
            "rct-5" | "rct5" => CausalKind::Rct5,
            "obs-cps" => CausalKind::ObsCps,
            "obs-uconf" => CausalKind::ObsUconf,
            "obs-nopos" => CausalKind::ObsNopos,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown causal configuration '{s}'"
                )))
            }
        };
        CausalConfig::new(kind, informative, latent)
    }
}

impl TryFrom<String> for CausalConfig {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CausalConfig> for String {
    fn from(c: CausalConfig) -> String {
        c.to_string()
    }
}

/// Observed covariates `X1..X5` and latent confounders `U1, U2`, all in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitLatents {
    pub x: [f64; N_COVARIATES],
    pub u: [f64; N_LATENTS],
}

impl UnitLatents {
    pub fn new(x: [f64; N_COVARIATES], u: [f64; N_LATENTS]) -> Result<Self> {
        if x.iter().chain(u.iter()).any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain("covariates must lie in [0, 1]".into()));
        }
        Ok(UnitLatents { x, u })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    /// Restricted mean survival time `E[min(T, h)]`.
    Rmst,
    /// Survival probability `P(T > h)`.
    SurvProb,
}

impl FromStr for Estimand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rmst" => Ok(Estimand::Rmst),
            "surv_prob" | "survprob" | "surv-prob" => Ok(Estimand::SurvProb),
            other => Err(Error::InvalidArgument(format!(
                "unknown estimand '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonRule {
    MaxObserved,
    Fixed(f64),
}

/// Knobs of the generative laws that are not part of the causal configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub informative: InformativeLaw,
    /// Standard deviation of the rate noise in the latent-censoring variant.
    pub latent_noise_sd: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            informative: InformativeLaw::default(),
            latent_noise_sd: 0.1f64.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub scenario: Scenario,
    pub config: CausalConfig,
    pub n: usize,
    pub seed: u64,
    pub estimand: Estimand,
    pub horizon_rule: HorizonRule,
    #[serde(default)]
    pub params: GeneratorParams,
    /// Average the ground truth over `U1` instead of conditioning on it.
    #[serde(default)]
    pub marginalize_u: bool,
}

impl DatasetSpec {
    pub fn new(scenario: Scenario, config: CausalConfig, n: usize, seed: u64) -> Self {
        DatasetSpec {
            scenario,
            config,
            n,
            seed,
            estimand: Estimand::Rmst,
            horizon_rule: HorizonRule::MaxObserved,
            params: GeneratorParams::default(),
            marginalize_u: false,
        }
    }

    pub fn with_estimand(mut self, estimand: Estimand) -> Self {
        self.estimand = estimand;
        self
    }

    pub fn with_horizon(mut self, rule: HorizonRule) -> Self {
        self.horizon_rule = rule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::EmptyRequest("dataset size must be at least 1"));
        }
        if let HorizonRule::Fixed(h) = self.horizon_rule {
            if !(h > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "fixed horizon must be > 0, got {h}"
                )));
            }
        }
        CausalConfig::new(
            self.config.kind,
            self.config.informative_censoring,
            self.config.latent_censoring,
        )?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub id: usize,
    pub latents: UnitLatents,
    pub w: u8,
    pub obs_time: f64,
    pub event: bool,
    pub t0: f64,
    pub t1: f64,
    pub cate_true: f64,
}

impl Unit {
    /// Potential outcome under the realized treatment.
    pub fn factual_time(&self) -> f64 {
        if self.w == 1 {
            self.t1
        } else {
            self.t0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub units: Vec<Unit>,
    pub scenario: Scenario,
    pub config: CausalConfig,
    pub seed: u64,
    pub estimand: Estimand,
    pub horizon: f64,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Observed covariates as an `n x 5` matrix.
    pub fn covariates(&self) -> Array2<f64> {
        let mut x = Array2::zeros((self.units.len(), N_COVARIATES));
        for (mut row, unit) in x.rows_mut().into_iter().zip(&self.units) {
            for (dst, src) in row.iter_mut().zip(unit.latents.x) {
                *dst = src;
            }
        }
        x
    }

    pub fn treatments(&self) -> Vec<u8> {
        self.units.iter().map(|u| u.w).collect()
    }

    pub fn obs_times(&self) -> Vec<f64> {
        self.units.iter().map(|u| u.obs_time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.units.iter().map(|u| u.event).collect()
    }

    pub fn true_cates(&self) -> Vec<f64> {
        self.units.iter().map(|u| u.cate_true).collect()
    }

    pub fn factual_times(&self) -> Vec<f64> {
        self.units.iter().map(Unit::factual_time).collect()
    }

    pub fn censoring_rate(&self) -> f64 {
        let censored = self.units.iter().filter(|u| !u.event).count();
        censored as f64 / self.units.len().max(1) as f64
    }

    pub fn treatment_rate(&self) -> f64 {
        let treated = self.units.iter().filter(|u| u.w == 1).count();
        treated as f64 / self.units.len().max(1) as f64
    }

    /// Rows at `indices`, keeping unit ids and the resolved horizon.
    pub fn subset(&self, indices: &[usize]) -> SyntheticDataset {
        SyntheticDataset {
            units: indices.iter().map(|&i| self.units[i].clone()).collect(),
            scenario: self.scenario,
            config: self.config,
            seed: self.seed,
            estimand: self.estimand,
            horizon: self.horizon,
        }
    }
}

pub fn sample_covariates(n: usize, seed: u64) -> Result<Vec<UnitLatents>> {
    if n == 0 {
        return Err(Error::EmptyRequest(
            "covariate sample size must be at least 1",
        ));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| draw_latents(seed, i as u64))
        .collect())
}

fn draw_latents(seed: u64, index: u64) -> UnitLatents {
    let mut rng = rng::stream(seed, index, Purpose::Covariates);
    let mut x = [0.0; N_COVARIATES];
    let mut u = [0.0; N_LATENTS];
    for v in x.iter_mut().chain(u.iter_mut()) {
        *v = rng.random::<f64>();
    }
    UnitLatents { x, u }
}

pub fn build_dataset(spec: &DatasetSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let latents = sample_covariates(spec.n, spec.seed)?;
    let mut units = latents
        .into_par_iter()
        .enumerate()
        .map(|(i, lat)| realize_unit(spec, i, lat))
        .collect::<Result<Vec<_>>>()?;

    let horizon = match spec.horizon_rule {
        HorizonRule::Fixed(h) => h,
        HorizonRule::MaxObserved => units.iter().map(|u| u.obs_time).fold(0.0, f64::max),
    };
    if !(horizon > 0.0) {
        return Err(Error::Domain(format!(
            "resolved horizon must be > 0, got {horizon}"
        )));
    }

    units.par_iter_mut().for_each(|unit| {
        unit.cate_true = if spec.marginalize_u {
            true_cate_marginal_u(
                spec.scenario,
                &spec.config,
                &spec.params,
                &unit.latents,
                spec.estimand,
                horizon,
            )
        } else {
            true_cate_with_params(
                spec.scenario,
                &spec.config,
                &spec.params,
                &unit.latents,
                spec.estimand,
                horizon,
            )
        };
    });

    Ok(SyntheticDataset {
        units,
        scenario: spec.scenario,
        config: spec.config,
        seed: spec.seed,
        estimand: spec.estimand,
        horizon,
    })
}

fn realize_unit(spec: &DatasetSpec, index: usize, latents: UnitLatents) -> Result<Unit> {
    let i = index as u64;
    let e = propensity_score(&spec.config, &latents);
    let mut rng_w = rng::stream(spec.seed, i, Purpose::Treatment);
    let w = u8::from(rng_w.random::<f64>() < e);

    let mut rng0 = rng::stream(spec.seed, i, Purpose::EventControl);
    let mut rng1 = rng::stream(spec.seed, i, Purpose::EventTreated);
    let (t0, t1) = generate_potential_outcomes(
        spec.scenario,
        &spec.config,
        &spec.params,
        &latents,
        &mut rng0,
        &mut rng1,
    );
    let t_w = if w == 1 { t1 } else { t0 };

    let mut rng_c = rng::stream(spec.seed, i, Purpose::Censoring);
    let c = censoring_time(
        spec.scenario,
        &spec.config,
        &spec.params,
        &latents,
        w,
        t_w,
        &mut rng_c,
    )?;
    Ok(Unit {
        id: index,
        latents,
        w,
        obs_time: t_w.min(c),
        event: t_w <= c,
        t0,
        t1,
        cate_true: f64::NAN,
    })
}
