use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{CausalConfig, CausalKind, GeneratorParams, Scenario, UnitLatents};
use crate::error::{Error, Result};

/// Poisson rates are clipped to this floor before sampling.
pub const MIN_POISSON_RATE: f64 = 1e-6;

/// Exponential censoring whose rate grows with the event time:
/// `rate = baseline_rate + slope * t_event`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InformativeLaw {
    pub baseline_rate: f64,
    pub slope: f64,
}

impl InformativeLaw {
    /// Coefficients that reproduce the published censoring-rate table.
    pub const CALIBRATED: InformativeLaw = InformativeLaw {
        baseline_rate: 0.1,
        slope: 0.05,
    };

    /// Coefficients as they appear in the written generative formula.
    pub const AS_WRITTEN: InformativeLaw = InformativeLaw {
        baseline_rate: 1.0,
        slope: 0.1,
    };

    pub fn rate(&self, t_event: f64) -> f64 {
        self.baseline_rate + self.slope * t_event
    }
}

impl Default for InformativeLaw {
    fn default() -> Self {
        InformativeLaw::CALIBRATED
    }
}

fn beta_2_4_pdf(x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    20.0 * x * (1.0 - x).powi(3)
}

pub fn propensity_score(config: &CausalConfig, unit: &UnitLatents) -> f64 {
    let x1 = unit.x[0];
    match config.kind {
        CausalKind::Rct50 => 0.5,
        CausalKind::Rct5 => 0.05,
        CausalKind::ObsCps => (1.0 + beta_2_4_pdf(x1)) / 4.0,
        CausalKind::ObsUconf => (1.0 + beta_2_4_pdf(0.3 * x1 + 0.7 * unit.u[0])) / 4.0,
        CausalKind::ObsNopos => {
            if x1 > 0.8 {
                1.0
            } else if x1 < 0.2 {
                0.0
            } else {
                0.5
            }
        }
    }
}

/// Distribution of one potential outcome given `(X, U)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArmLaw {
    /// Cox model with Weibull(k = 0.5) baseline: `S(t) = exp(-sqrt(t) * exp(lp))`.
    Cox { lp: f64 },
    /// `log T ~ N(mu, 1)`.
    LogNormal { mu: f64 },
    /// `T ~ Poisson(max(rate + noise, floor))`, `noise ~ N(0, noise_sd^2)`.
    Poisson { rate: f64, noise_sd: f64 },
}

/// Confounding shift applied to event times under `ObsUconf`.
fn confounding_shift(config: &CausalConfig, unit: &UnitLatents) -> f64 {
    if config.kind == CausalKind::ObsUconf && !config.latent_censoring {
        0.5 * (unit.u[0] - unit.x[1])
    } else {
        0.0
    }
}

impl ArmLaw {
    pub fn for_arm(
        scenario: Scenario,
        config: &CausalConfig,
        params: &GeneratorParams,
        unit: &UnitLatents,
        w: u8,
    ) -> ArmLaw {
        let [x1, x2, x3, _, _] = unit.x;
        let w = f64::from(w);
        let eps = confounding_shift(config, unit);
        let low_x1 = if x1 < 0.5 { 1.0 } else { 0.0 };
        match scenario {
            Scenario::A => ArmLaw::Cox {
                lp: x1 + (-0.5 + x2) * w + eps,
            },
            Scenario::B => ArmLaw::LogNormal {
                mu: -1.85 - 0.8 * low_x1
                    + 0.7 * x2.sqrt()
                    + 0.2 * x3
                    + (0.7 - 0.4 * low_x1 - 0.4 * x2.sqrt()) * w
                    + eps,
            },
            Scenario::D => ArmLaw::LogNormal {
                mu: 0.3 - 0.5 * low_x1
                    + 0.5 * x2.sqrt()
                    + 0.2 * x3
                    + (1.0 - 0.8 * low_x1 - 0.8 * x2.sqrt()) * w
                    + eps,
            },
            Scenario::C | Scenario::E => {
                let base = if scenario == Scenario::C { 6.0 } else { 7.0 };
                if config.latent_censoring {
                    let driver = (0.3 * x1 + 0.7 * unit.u[0]).sqrt();
                    ArmLaw::Poisson {
                        rate: x2 * x2 + x3 + base + 2.0 * (driver - 0.3) * w,
                        noise_sd: params.latent_noise_sd,
                    }
                } else {
                    ArmLaw::Poisson {
                        rate: x2 * x2 + x3 + base + 2.0 * (x1.sqrt() - 0.3) * w + eps,
                        noise_sd: 0.0,
                    }
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ArmLaw::Cox { lp } => {
                // 1 - U keeps the log argument in (0, 1]
                let u = 1.0 - rng.random::<f64>();
                let root = -u.ln() / lp.exp();
                root * root
            }
            ArmLaw::LogNormal { mu } => {
                let eta: f64 = rng.sample(rand_distr::StandardNormal);
                (mu + eta).exp()
            }
            ArmLaw::Poisson { rate, noise_sd } => {
                let noise = if noise_sd > 0.0 {
                    Normal::new(0.0, noise_sd).expect("finite sd").sample(rng)
                } else {
                    0.0
                };
                let lambda = (rate + noise).max(MIN_POISSON_RATE);
                Poisson::new(lambda).expect("positive rate").sample(rng)
            }
        }
    }
}

/// Draw `(T(0), T(1))`; each arm consumes its own stream.
pub fn generate_potential_outcomes<R: Rng + ?Sized>(
    scenario: Scenario,
    config: &CausalConfig,
    params: &GeneratorParams,
    unit: &UnitLatents,
    rng_control: &mut R,
    rng_treated: &mut R,
) -> (f64, f64) {
    let t0 = ArmLaw::for_arm(scenario, config, params, unit, 0).sample(rng_control);
    let t1 = ArmLaw::for_arm(scenario, config, params, unit, 1).sample(rng_treated);
    (t0, t1)
}

/// Censoring time for a unit with realized arm `w` and event time `t_event`.
/// Returns `f64::INFINITY` for units that are never censored.
pub fn censoring_time<R: Rng + ?Sized>(
    scenario: Scenario,
    config: &CausalConfig,
    params: &GeneratorParams,
    unit: &UnitLatents,
    w: u8,
    t_event: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(t_event >= 0.0) {
        return Err(Error::Domain(format!(
            "event time must be >= 0, got {t_event}"
        )));
    }
    let [x1, x2, x3, x4, _] = unit.x;
    let piecewise = 1.0 + if x4 < 0.5 { 1.0 } else { 0.0 };

    if config.latent_censoring {
        return Ok(if unit.u[0] <= 0.6 {
            f64::INFINITY
        } else {
            piecewise
        });
    }
    if config.informative_censoring {
        let rate = params.informative.rate(t_event);
        let exp =
            Exp::new(rate).map_err(|e| Error::Domain(format!("censoring rate {rate}: {e}")))?;
        return Ok(exp.sample(rng));
    }

    let w = f64::from(w);
    let low_x1 = if x1 < 0.5 { 1.0 } else { 0.0 };
    let weibull2 = |lp: f64, rng: &mut R| -> f64 {
        // cumulative hazard t^2 * exp(lp), inverted in closed form
        let u = 1.0 - rng.random::<f64>();
        (-u.ln() / lp.exp()).sqrt()
    };
    let arm_term = (1.15 + 0.5 * low_x1 - 0.3 * x2.sqrt()) * w;
    Ok(match scenario {
        Scenario::A => 3.0 * rng.random::<f64>(),
        Scenario::B => weibull2(-1.75 - 0.5 * x2.sqrt() + 0.2 * x3 + arm_term, rng),
        Scenario::D => weibull2(-0.9 + 2.0 * x2.sqrt() + 2.0 * x3 + arm_term, rng),
        Scenario::C => {
            if rng.random::<f64>() < 0.6 {
                f64::INFINITY
            } else {
                piecewise
            }
        }
        Scenario::E => {
            let rate = 3.0 + (1.0 + (2.0 * x2 + x3).exp()).ln();
            Poisson::new(rate).expect("positive rate").sample(rng)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn unit(x: [f64; 5], u: [f64; 2]) -> UnitLatents {
        UnitLatents::new(x, u).unwrap()
    }

    #[test]
    fn propensities() {
        let any = unit([0.3, 0.2, 0.1, 0.9, 0.5], [0.4, 0.6]);
        assert_eq!(
            propensity_score(&CausalConfig::ignorable(CausalKind::Rct50), &any),
            0.5
        );
        assert_eq!(
            propensity_score(&CausalConfig::ignorable(CausalKind::Rct5), &any),
            0.05
        );
        let nopos = CausalConfig::ignorable(CausalKind::ObsNopos);
        assert_eq!(
            propensity_score(&nopos, &unit([0.9, 0.0, 0.0, 0.0, 0.0], [0.0; 2])),
            1.0
        );
        assert_eq!(
            propensity_score(&nopos, &unit([0.1, 0.0, 0.0, 0.0, 0.0], [0.0; 2])),
            0.0
        );
        assert_eq!(
            propensity_score(&nopos, &unit([0.5, 0.0, 0.0, 0.0, 0.0], [0.0; 2])),
            0.5
        );
        // Beta(0.5; 2, 4) = 20 * 0.5 * 0.5^3 = 1.25
        let cps = propensity_score(
            &CausalConfig::ignorable(CausalKind::ObsCps),
            &unit([0.5, 0.0, 0.0, 0.0, 0.0], [0.0; 2]),
        );
        assert!((cps - 0.5625).abs() < 1e-15);
    }

    #[test]
    fn poisson_rates_by_hand() {
        let params = GeneratorParams::default();
        let cfg = CausalConfig::ignorable(CausalKind::Rct50);
        let u = unit([0.25, 0.5, 0.5, 0.0, 0.0], [0.0; 2]);
        let rate = |w| match ArmLaw::for_arm(Scenario::C, &cfg, &params, &u, w) {
            ArmLaw::Poisson { rate, .. } => rate,
            _ => unreachable!(),
        };
        assert!((rate(0) - 6.75).abs() < 1e-12);
        assert!((rate(1) - 7.15).abs() < 1e-12);

        let flat = unit([0.09, 0.5, 0.5, 0.0, 0.0], [0.0; 2]);
        let diff = match (
            ArmLaw::for_arm(Scenario::C, &cfg, &params, &flat, 1),
            ArmLaw::for_arm(Scenario::C, &cfg, &params, &flat, 0),
        ) {
            (ArmLaw::Poisson { rate: r1, .. }, ArmLaw::Poisson { rate: r0, .. }) => r1 - r0,
            _ => unreachable!(),
        };
        assert!(diff.abs() < 1e-12);
    }

    #[test]
    fn aft_linear_predictor_by_hand() {
        let law = ArmLaw::for_arm(
            Scenario::B,
            &CausalConfig::ignorable(CausalKind::Rct50),
            &GeneratorParams::default(),
            &unit([0.6, 0.0, 0.0, 0.0, 0.0], [0.0; 2]),
            0,
        );
        assert_eq!(law, ArmLaw::LogNormal { mu: -1.85 });
        // median of exp(N(mu, 1)) is exp(mu)
        let mut rng = stream(5, 0, Purpose::Model);
        let mut draws: Vec<f64> = (0..20_001).map(|_| law.sample(&mut rng)).collect();
        draws.sort_by(f64::total_cmp);
        let median = draws[10_000];
        assert!((median - (-1.85f64).exp()).abs() < 0.01, "median {median}");
    }

    #[test]
    fn confounding_shift_cancels_in_poisson_rate_differences() {
        let params = GeneratorParams::default();
        let uconf = CausalConfig::ignorable(CausalKind::ObsUconf);
        let plain = CausalConfig::ignorable(CausalKind::ObsCps);
        let lat = crate::datagen::sample_covariates(200, 4).unwrap();
        for scenario in [Scenario::C, Scenario::E] {
            for l in &lat {
                let diff = |cfg: &CausalConfig| match (
                    ArmLaw::for_arm(scenario, cfg, &params, l, 1),
                    ArmLaw::for_arm(scenario, cfg, &params, l, 0),
                ) {
                    (ArmLaw::Poisson { rate: a, .. }, ArmLaw::Poisson { rate: b, .. }) => a - b,
                    _ => unreachable!(),
                };
                assert!((diff(&uconf) - diff(&plain)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn piecewise_and_latent_censoring() {
        let params = GeneratorParams::default();
        let cfg = CausalConfig::ignorable(CausalKind::ObsCps);
        let u = unit([0.5, 0.5, 0.5, 0.3, 0.5], [0.5, 0.5]);
        let mut rng = stream(1, 0, Purpose::Censoring);
        let mut finite = 0;
        for _ in 0..1000 {
            let c = censoring_time(Scenario::C, &cfg, &params, &u, 0, 5.0, &mut rng).unwrap();
            if c.is_finite() {
                assert_eq!(c, 2.0);
                finite += 1;
            }
        }
        assert!((300..500).contains(&finite));

        let latent = CausalConfig::new(CausalKind::ObsUconf, false, true).unwrap();
        let c = censoring_time(Scenario::C, &latent, &params, &u, 1, 3.0, &mut rng).unwrap();
        assert!(c.is_infinite());
        let high_u = unit([0.5, 0.5, 0.5, 0.7, 0.5], [0.9, 0.5]);
        let c = censoring_time(Scenario::C, &latent, &params, &high_u, 1, 3.0, &mut rng).unwrap();
        assert_eq!(c, 1.0);
    }

    #[test]
    fn informative_censoring_mean_matches_rate() {
        let cfg = CausalConfig::new(CausalKind::ObsCps, true, false).unwrap();
        let u = unit([0.5; 5], [0.5; 2]);
        for law in [InformativeLaw::AS_WRITTEN, InformativeLaw::CALIBRATED] {
            let params = GeneratorParams {
                informative: law,
                ..GeneratorParams::default()
            };
            let mut rng = stream(3, 0, Purpose::Censoring);
            let n = 100_000;
            let mean = (0..n)
                .map(|_| censoring_time(Scenario::A, &cfg, &params, &u, 0, 0.0, &mut rng).unwrap())
                .sum::<f64>()
                / n as f64;
            let expected = 1.0 / law.baseline_rate;
            assert!((mean - expected).abs() < 0.05 * expected, "{law:?}: {mean}");
        }
    }

    #[test]
    fn negative_event_time_is_a_domain_error() {
        let mut rng = stream(3, 0, Purpose::Censoring);
        let err = censoring_time(
            Scenario::A,
            &CausalConfig::ignorable(CausalKind::Rct50),
            &GeneratorParams::default(),
            &unit([0.5; 5], [0.5; 2]),
            0,
            -1.0,
            &mut rng,
        );
        assert!(matches!(err, Err(Error::Domain(_))));
    }
}
