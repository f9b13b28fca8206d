//! Right-continuous survival step functions and the Kaplan-Meier estimator.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_len, Error, Result};

/// `S(t)` equals `probs[k]` for the last `grid[k] <= t`, and 1 before `grid[0]`.
///
/// `support_end` is the last time the curve is informative about (the largest
/// observed time for a fitted curve). Integrals that run "to the end" stop there;
/// when the fit ends on an event the curve is already 0 by then.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    grid: Vec<f64>,
    probs: Vec<f64>,
    support_end: f64,
}

impl SurvivalCurve {
    pub fn new(grid: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let end = grid.last().copied().unwrap_or(0.0);
        Self::with_support(grid, probs, end)
    }

    pub fn with_support(grid: Vec<f64>, probs: Vec<f64>, support_end: f64) -> Result<Self> {
        ensure_same_len("survival curve grid/probs", grid.len(), probs.len())?;
        if grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::Domain("curve grid must be finite and >= 0".into()));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain(
                "curve grid must be strictly increasing".into(),
            ));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Domain(
                "survival probabilities must lie in [0, 1]".into(),
            ));
        }
        if probs.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Domain(
                "survival probabilities must be non-increasing".into(),
            ));
        }
        let last = grid.last().copied().unwrap_or(0.0);
        Ok(SurvivalCurve {
            grid,
            probs,
            support_end: support_end.max(last),
        })
    }

    /// Constant curve `S = 1` with the given support.
    pub fn flat(support_end: f64) -> Self {
        SurvivalCurve {
            grid: Vec::new(),
            probs: Vec::new(),
            support_end,
        }
    }

    /// Assemble without validation; callers guarantee the invariants.
    pub(crate) fn from_parts(grid: Vec<f64>, probs: Vec<f64>, support_end: f64) -> Self {
        debug_assert_eq!(grid.len(), probs.len());
        SurvivalCurve {
            grid,
            probs,
            support_end,
        }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn support_end(&self) -> f64 {
        self.support_end
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = self.grid.partition_point(|&g| g <= t);
        if k == 0 {
            1.0
        } else {
            self.probs[k - 1]
        }
    }

    /// Exact area under the step curve on `[a, b]`.
    pub fn area(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let mut k = self.grid.partition_point(|&g| g <= a);
        let mut left = a;
        let mut level = if k == 0 { 1.0 } else { self.probs[k - 1] };
        let mut acc = 0.0;
        while k < self.grid.len() && self.grid[k] < b {
            acc += level * (self.grid[k] - left);
            left = self.grid[k];
            level = self.probs[k];
            k += 1;
        }
        acc + level * (b - left)
    }

    /// Restricted mean survival time on `[0, h]`.
    pub fn rmst(&self, h: f64) -> f64 {
        self.area(0.0, h)
    }

    /// Area on `[0, support_end]`: the KM mean for a fitted curve.
    pub fn mean(&self) -> f64 {
        self.area(0.0, self.support_end)
    }

    /// `E[T | T > t0] = t0 + area(t0, end) / S(t0)`; returns `t0` when `S(t0) = 0`.
    pub fn conditional_residual_mean(&self, t0: f64) -> f64 {
        let s = self.eval(t0);
        if s <= 0.0 {
            return t0;
        }
        t0 + self.area(t0, self.support_end) / s
    }
}

/// Free-function forms matching the operation names used across the crate.
pub fn eval_curve(curve: &SurvivalCurve, t: f64) -> f64 {
    curve.eval(t)
}

pub fn rmst(curve: &SurvivalCurve, h: f64) -> f64 {
    curve.rmst(h)
}

pub fn conditional_residual_mean(curve: &SurvivalCurve, t0: f64) -> f64 {
    curve.conditional_residual_mean(t0)
}

/// Distinct observed times with event and censoring counts, sorted ascending.
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct RiskTable {
    pub times: Vec<f64>,
    pub events: Vec<f64>,
    pub censored: Vec<f64>,
}

impl RiskTable {
    pub fn build(times: &[f64], events: &[bool]) -> Self {
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        let mut table = RiskTable::default();
        for i in order {
            let t = times[i];
            if table.times.last() != Some(&t) {
                table.times.push(t);
                table.events.push(0.0);
                table.censored.push(0.0);
            }
            let k = table.times.len() - 1;
            if events[i] {
                table.events[k] += 1.0;
            } else {
                table.censored[k] += 1.0;
            }
        }
        table
    }

    /// Product-limit curve. At tied times, events are removed before censorings.
    pub fn curve(&self) -> SurvivalCurve {
        let mut at_risk: f64 = self.events.iter().sum::<f64>() + self.censored.iter().sum::<f64>();
        let mut s = 1.0;
        let mut grid = Vec::new();
        let mut probs = Vec::new();
        let mut end = 0.0;
        for k in 0..self.times.len() {
            let (d, c) = (self.events[k], self.censored[k]);
            if d + c > 0.0 {
                end = self.times[k];
            }
            if d > 0.0 && at_risk > 0.0 {
                s *= 1.0 - d / at_risk;
                grid.push(self.times[k]);
                probs.push(s.max(0.0));
            }
            at_risk -= d + c;
        }
        SurvivalCurve::from_parts(grid, probs, end)
    }

    /// KM mean `\int_0^{t_max} S`, computed in one pass without materializing the curve.
    pub fn km_mean(&self) -> f64 {
        let mut at_risk: f64 = self.events.iter().sum::<f64>() + self.censored.iter().sum::<f64>();
        let mut s = 1.0;
        let mut prev = 0.0;
        let mut acc = 0.0;
        for k in 0..self.times.len() {
            let (d, c) = (self.events[k], self.censored[k]);
            if d + c == 0.0 {
                continue;
            }
            acc += s * (self.times[k] - prev);
            prev = self.times[k];
            if d > 0.0 {
                s *= 1.0 - d / at_risk;
            }
            at_risk -= d + c;
        }
        acc
    }
}

pub fn fit_km(times: &[f64], events: &[bool]) -> Result<SurvivalCurve> {
    ensure_same_len("times/events", times.len(), events.len())?;
    if times.is_empty() {
        return Err(Error::EmptyRequest(
            "Kaplan-Meier needs at least one observation",
        ));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::Domain(
            "observed times must be finite and >= 0".into(),
        ));
    }
    Ok(RiskTable::build(times, events).curve())
}
