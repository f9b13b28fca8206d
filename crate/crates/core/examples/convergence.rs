//! Test RMSE against training size for two imputed learners.

use anyhow::Result;
use survhte::baselearn::LearnerKind;
use survhte::bench::{convergence_run, ExperimentConfig, RosterEntry};
use survhte::cate::Variant;
use survhte::datagen::Scenario;
use survhte::impute::ImputeMethod;

fn main() -> Result<()> {
    let cfg = ExperimentConfig {
        scenarios: vec![Scenario::C],
        configs: vec!["RCT-50".parse()?],
        n_train: 5000,
        n_val: 1000,
        n_test: 1000,
        pool_size: 8000,
        repeats: 2,
        seed: 3,
        roster: vec![
            RosterEntry::imputed(Variant::S, ImputeMethod::Margin, LearnerKind::Lasso),
            RosterEntry::imputed(Variant::T, ImputeMethod::PseudoObs, LearnerKind::Lasso),
        ],
        ..ExperimentConfig::default()
    };
    let rep = convergence_run(&cfg, &[50, 100, 500, 1000, 5000])?;
    for p in &rep.points {
        println!(
            "{:>5} {:<36} median RMSE {:.3}",
            p.train_size,
            p.method.to_string(),
            p.median_rmse.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
