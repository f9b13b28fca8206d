//! Surrogate event times for censored units.
//!
//! An imputer is fit on training outcomes only and then applied either back
//! to the training rows (`impute_in_sample`) or to held-out rows (`impute`).
//! Held-out pseudo-observations add the query unit to the training sample,
//! so the jackknife is taken over `N = n_train + 1` units.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::io::{fmt_real, write_atomic};
use crate::datagen::SyntheticDataset;
use crate::error::{ensure_same_len, Error, Result};
use crate::survcurve::{RiskTable, SurvivalCurve};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ImputeMethod {
    Margin,
    IpcwT,
    PseudoObs,
}

impl ImputeMethod {
    pub const ALL: [ImputeMethod; 3] = [
        ImputeMethod::Margin,
        ImputeMethod::IpcwT,
        ImputeMethod::PseudoObs,
    ];
}

impl fmt::Display for ImputeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImputeMethod::Margin => "MARGIN",
            ImputeMethod::IpcwT => "IPCW_T",
            ImputeMethod::PseudoObs => "PSEUDO_OBS",
        })
    }
}

impl FromStr for ImputeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "MARGIN" => Ok(ImputeMethod::Margin),
            "IPCW_T" | "IPCW" => Ok(ImputeMethod::IpcwT),
            "PSEUDO_OBS" | "PSEUDO" => Ok(ImputeMethod::PseudoObs),
            _ => Err(Error::InvalidArgument(format!(
                "unknown imputation method '{s}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImputedOutcome {
    pub unit_id: usize,
    pub surrogate: f64,
    pub method: ImputeMethod,
    pub floored: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImputeOptions {
    /// Give uncensored units their pseudo-value instead of their observed time.
    pub replace_uncensored: bool,
    /// Apply the floor rule to replaced uncensored units as well.
    pub floor_all: bool,
}

#[derive(Debug, Clone)]
pub struct FittedImputer {
    method: ImputeMethod,
    options: ImputeOptions,
    times: Vec<f64>,
    events: Vec<bool>,
    table: RiskTable,
    curve: SurvivalCurve,
    km_mean: f64,
    // ascending event times and suffix sums for IPCW-T lookups
    event_times: Vec<f64>,
    event_suffix: Vec<f64>,
}

impl FittedImputer {
    pub fn fit(
        method: ImputeMethod,
        times: &[f64],
        events: &[bool],
        options: ImputeOptions,
    ) -> Result<Self> {
        ensure_same_len("times/events", times.len(), events.len())?;
        if times.is_empty() {
            return Err(Error::EmptyRequest(
                "imputation needs a nonempty training sample",
            ));
        }
        if method == ImputeMethod::PseudoObs && times.len() < 2 {
            return Err(Error::InvalidArgument(
                "pseudo-observations need at least 2 units".into(),
            ));
        }
        if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::Domain(
                "observed times must be finite and >= 0".into(),
            ));
        }
        let table = RiskTable::build(times, events);
        let curve = table.curve();
        let km_mean = table.km_mean();
        let mut event_times: Vec<f64> = times
            .iter()
            .zip(events)
            .filter(|(_, &e)| e)
            .map(|(&t, _)| t)
            .collect();
        event_times.sort_by(f64::total_cmp);
        let mut event_suffix = vec![0.0; event_times.len() + 1];
        for k in (0..event_times.len()).rev() {
            event_suffix[k] = event_suffix[k + 1] + event_times[k];
        }
        Ok(FittedImputer {
            method,
            options,
            times: times.to_vec(),
            events: events.to_vec(),
            table,
            curve,
            km_mean,
            event_times,
            event_suffix,
        })
    }

    pub fn method(&self) -> ImputeMethod {
        self.method
    }

    /// Number of training rows whose outcomes the imputer has consumed.
    pub fn n_fit(&self) -> usize {
        self.times.len()
    }

    pub fn curve(&self) -> &SurvivalCurve {
        &self.curve
    }

    /// Surrogates for the training rows themselves (leave-one-out pseudo-values).
    pub fn impute_in_sample(&self, ids: &[usize]) -> Result<Vec<ImputedOutcome>> {
        ensure_same_len("ids/training rows", ids.len(), self.times.len())?;
        Ok((0..ids.len())
            .into_par_iter()
            .map(|i| {
                let (t, e) = (self.times[i], self.events[i]);
                let raw = match self.method {
                    ImputeMethod::PseudoObs => {
                        let n = self.times.len() as f64;
                        let loo = km_mean_adjusted(&self.table, t, e, -1.0);
                        n * self.km_mean - (n - 1.0) * loo
                    }
                    _ => self.raw_direct(t, e),
                };
                self.finish(ids[i], t, e, raw)
            })
            .collect())
    }

    /// Surrogates for rows not in the training sample.
    pub fn impute(
        &self,
        ids: &[usize],
        times: &[f64],
        events: &[bool],
    ) -> Result<Vec<ImputedOutcome>> {
        ensure_same_len("ids/times", ids.len(), times.len())?;
        ensure_same_len("times/events", times.len(), events.len())?;
        if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::Domain(
                "observed times must be finite and >= 0".into(),
            ));
        }
        Ok((0..ids.len())
            .into_par_iter()
            .map(|i| {
                let (t, e) = (times[i], events[i]);
                let raw = match self.method {
                    ImputeMethod::PseudoObs => {
                        let n = self.times.len() as f64 + 1.0;
                        let with = km_mean_adjusted(&self.table, t, e, 1.0);
                        n * with - (n - 1.0) * self.km_mean
                    }
                    _ => self.raw_direct(t, e),
                };
                self.finish(ids[i], t, e, raw)
            })
            .collect())
    }

    fn raw_direct(&self, t: f64, event: bool) -> f64 {
        if event {
            return t;
        }
        match self.method {
            ImputeMethod::Margin => self.curve.conditional_residual_mean(t),
            ImputeMethod::IpcwT => {
                let k = self.event_times.partition_point(|&s| s <= t);
                let count = self.event_times.len() - k;
                if count == 0 {
                    t
                } else {
                    self.event_suffix[k] / count as f64
                }
            }
            ImputeMethod::PseudoObs => unreachable!("pseudo-values are computed by the caller"),
        }
    }

    fn finish(&self, unit_id: usize, t: f64, event: bool, raw: f64) -> ImputedOutcome {
        let raw = if event && !self.options.replace_uncensored {
            t
        } else {
            raw
        };
        let eligible = !event || self.options.floor_all;
        let floored = eligible && raw < t;
        ImputedOutcome {
            unit_id,
            surrogate: if floored { t } else { raw },
            method: self.method,
            floored,
        }
    }
}

/// KM mean after adding (`sign = 1`) or removing (`sign = -1`) one unit at time `t`.
pub(crate) fn km_mean_adjusted(table: &RiskTable, t: f64, event: bool, sign: f64) -> f64 {
    let total: f64 = table.events.iter().sum::<f64>() + table.censored.iter().sum::<f64>();
    let mut at_risk = total + sign;
    let mut s = 1.0;
    let mut prev = 0.0;
    let mut acc = 0.0;
    let mut pending = true;
    let mut step = |time: f64, d: f64, c: f64, at_risk: &mut f64| {
        if d + c <= 0.0 {
            return;
        }
        acc += s * (time - prev);
        prev = time;
        if d > 0.0 {
            s *= 1.0 - d / *at_risk;
        }
        *at_risk -= d + c;
    };
    let (de, ce) = if event { (sign, 0.0) } else { (0.0, sign) };
    for k in 0..table.times.len() {
        let time = table.times[k];
        if pending && t < time {
            step(t, de, ce, &mut at_risk);
            pending = false;
        }
        if pending && t == time {
            step(
                time,
                table.events[k] + de,
                table.censored[k] + ce,
                &mut at_risk,
            );
            pending = false;
        } else {
            step(time, table.events[k], table.censored[k], &mut at_risk);
        }
    }
    if pending {
        step(t, de, ce, &mut at_risk);
    }
    acc
}

fn in_sample(
    ds: &SyntheticDataset,
    method: ImputeMethod,
    options: ImputeOptions,
) -> Result<Vec<ImputedOutcome>> {
    let times = ds.obs_times();
    let events = ds.events();
    let ids: Vec<usize> = ds.units.iter().map(|u| u.id).collect();
    FittedImputer::fit(method, &times, &events, options)?.impute_in_sample(&ids)
}

pub fn impute_margin(ds: &SyntheticDataset) -> Result<Vec<ImputedOutcome>> {
    in_sample(ds, ImputeMethod::Margin, ImputeOptions::default())
}

pub fn impute_ipcw_t(ds: &SyntheticDataset) -> Result<Vec<ImputedOutcome>> {
    in_sample(ds, ImputeMethod::IpcwT, ImputeOptions::default())
}

pub fn impute_pseudo_obs(ds: &SyntheticDataset) -> Result<Vec<ImputedOutcome>> {
    in_sample(ds, ImputeMethod::PseudoObs, ImputeOptions::default())
}

pub const IMPUTED_CSV_HEADER: &str = "id,method,surrogate,floored";

pub fn render_imputed_csv(rows: &[ImputedOutcome]) -> String {
    let mut out = String::from(IMPUTED_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.unit_id,
            r.method,
            fmt_real(r.surrogate),
            u8::from(r.floored)
        ));
    }
    out
}

pub fn write_imputed_csv(rows: &[ImputedOutcome], path: &Path) -> Result<()> {
    write_atomic(path, render_imputed_csv(rows).as_bytes())
}
