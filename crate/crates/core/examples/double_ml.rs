//! Double-ML with cross-fitted nuisances: effect coefficients and a bootstrap ATE interval.

use anyhow::{bail, Result};
use survhte::baselearn::{LearnerKind, Tuning};
use survhte::cate::{fit_double_ml, CateModel};
use survhte::datagen::{build_dataset, DatasetSpec, Scenario};
use survhte::impute::{FittedImputer, ImputeMethod, ImputeOptions};

fn main() -> Result<()> {
    let ds = build_dataset(&DatasetSpec::new(Scenario::A, "OBS-CPS".parse()?, 5000, 5))?;
    let h = ds.horizon;
    let imp = FittedImputer::fit(
        ImputeMethod::Margin,
        &ds.obs_times(),
        &ds.events(),
        ImputeOptions::default(),
    )?;
    let ids: Vec<usize> = ds.units.iter().map(|u| u.id).collect();
    let y: Vec<f64> = imp
        .impute_in_sample(&ids)?
        .iter()
        .map(|r| r.surrogate.min(h))
        .collect();

    let CateModel::DoubleMl(m) = fit_double_ml(
        ds.covariates().view(),
        &ds.treatments(),
        &y,
        &Tuning::grid(LearnerKind::Lasso),
        2,
        5,
    )?
    else {
        bail!("expected a Double-ML model");
    };
    let truth = ds.true_cates().iter().sum::<f64>() / ds.len() as f64;
    println!(
        "ATE {:.4}  95% CI [{:.4}, {:.4}]  true {truth:.4}",
        m.ate, m.ate_ci.0, m.ate_ci.1
    );
    for (j, (t, se)) in m.theta.iter().zip(&m.theta_se).enumerate() {
        let name = if j == 0 {
            "intercept".to_string()
        } else {
            format!("x{j}")
        };
        println!("  {name:>9}: {t:+.4} (se {se:.4})");
    }
    Ok(())
}
