//! Ground-truth functionals of the potential-outcome laws.
//!
//! Each arm law has a closed-form restricted mean and survival probability,
//! so the truth is exact rather than a quadrature approximation. The
//! latent-variant Poisson law carries Gaussian rate noise, which is averaged
//! out with composite Simpson on `[-8 sd, 8 sd]`.

use rayon::prelude::*;
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use super::laws::{ArmLaw, MIN_POISSON_RATE};
use super::{sample_covariates, CausalConfig, Estimand, GeneratorParams, Scenario, UnitLatents};
use crate::error::Result;

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let panels = panels + panels % 2;
    let step = (b - a) / panels as f64;
    let mut acc = f(a) + f(b);
    for k in 1..panels {
        let weight = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += weight * f(a + k as f64 * step);
    }
    acc * step / 3.0
}

fn poisson_rmst(lambda: f64, horizon: f64) -> f64 {
    if horizon.is_infinite() {
        return lambda;
    }
    // E[min(T, h)] = sum_{k < floor(h)} P(T > k) + (h - floor(h)) P(T > floor(h))
    let whole = horizon.floor();
    let ln_lambda = lambda.ln();
    let mut cdf = 0.0;
    let mut acc = 0.0;
    let mut k = 0u64;
    loop {
        cdf += (-lambda + k as f64 * ln_lambda - ln_gamma(k as f64 + 1.0)).exp();
        let tail = (1.0 - cdf).max(0.0);
        if (k as f64) < whole {
            acc += tail;
        } else {
            acc += (horizon - whole) * tail;
            break;
        }
        if tail == 0.0 {
            break;
        }
        k += 1;
    }
    acc
}

fn poisson_survival(lambda: f64, horizon: f64) -> f64 {
    if horizon.is_infinite() {
        return 0.0;
    }
    let whole = horizon.floor().max(0.0) as u64;
    let ln_lambda = lambda.ln();
    let cdf: f64 = (0..=whole)
        .map(|k| (-lambda + k as f64 * ln_lambda - ln_gamma(k as f64 + 1.0)).exp())
        .sum();
    (1.0 - cdf).max(0.0)
}

impl ArmLaw {
    /// `E[min(T, h)]`; `h = inf` gives the unrestricted mean.
    pub fn rmst(&self, horizon: f64) -> f64 {
        match *self {
            ArmLaw::Cox { lp } => {
                let a = lp.exp();
                if horizon.is_infinite() {
                    return 2.0 / (a * a);
                }
                let s = a * horizon.sqrt();
                2.0 * (1.0 - (-s).exp() * (1.0 + s)) / (a * a)
            }
            ArmLaw::LogNormal { mu } => {
                if horizon.is_infinite() {
                    return (mu + 0.5).exp();
                }
                let z = horizon.ln() - mu;
                (mu + 0.5).exp() * std_normal_cdf(z - 1.0) + horizon * (1.0 - std_normal_cdf(z))
            }
            ArmLaw::Poisson { rate, noise_sd } => {
                self.average_over_noise(rate, noise_sd, |lambda| poisson_rmst(lambda, horizon))
            }
        }
    }

    /// `P(T > h)`.
    pub fn survival(&self, horizon: f64) -> f64 {
        match *self {
            ArmLaw::Cox { lp } => (-horizon.sqrt() * lp.exp()).exp(),
            ArmLaw::LogNormal { mu } => 1.0 - std_normal_cdf(horizon.ln() - mu),
            ArmLaw::Poisson { rate, noise_sd } => {
                self.average_over_noise(rate, noise_sd, |lambda| poisson_survival(lambda, horizon))
            }
        }
    }

    fn average_over_noise(&self, rate: f64, noise_sd: f64, f: impl Fn(f64) -> f64) -> f64 {
        if noise_sd <= 0.0 {
            return f(rate.max(MIN_POISSON_RATE));
        }
        let density = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let span = 8.0;
        simpson(
            |z| density(z) * f((rate + noise_sd * z).max(MIN_POISSON_RATE)),
            -span,
            span,
            128,
        )
    }

    pub fn functional(&self, estimand: Estimand, horizon: f64) -> f64 {
        match estimand {
            Estimand::Rmst => self.rmst(horizon),
            Estimand::SurvProb => self.survival(horizon),
        }
    }
}

/// Conditional effect `E[y(T(1)) - y(T(0)) | X, U]`.
pub fn true_cate(
    scenario: Scenario,
    config: &CausalConfig,
    unit: &UnitLatents,
    estimand: Estimand,
    horizon: f64,
) -> f64 {
    true_cate_with_params(
        scenario,
        config,
        &GeneratorParams::default(),
        unit,
        estimand,
        horizon,
    )
}

pub fn true_cate_with_params(
    scenario: Scenario,
    config: &CausalConfig,
    params: &GeneratorParams,
    unit: &UnitLatents,
    estimand: Estimand,
    horizon: f64,
) -> f64 {
    let arm = |w| ArmLaw::for_arm(scenario, config, params, unit, w).functional(estimand, horizon);
    arm(1) - arm(0)
}

/// Same effect averaged over the latent `U1 ~ Uniform(0, 1)` (64 Simpson panels).
pub fn true_cate_marginal_u(
    scenario: Scenario,
    config: &CausalConfig,
    params: &GeneratorParams,
    unit: &UnitLatents,
    estimand: Estimand,
    horizon: f64,
) -> f64 {
    simpson(
        |u1| {
            let mut shifted = *unit;
            shifted.u[0] = u1;
            true_cate_with_params(scenario, config, params, &shifted, estimand, horizon)
        },
        0.0,
        1.0,
        64,
    )
}

/// Population ATE as the average true CATE over `n` fresh units.
pub fn population_ate(
    scenario: Scenario,
    config: &CausalConfig,
    estimand: Estimand,
    horizon: f64,
    n: usize,
    seed: u64,
) -> Result<f64> {
    let lat = sample_covariates(n, seed)?;
    let total: f64 = lat
        .par_iter()
        .map(|u| true_cate(scenario, config, u, estimand, horizon))
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Ok(total / n as f64)
}
