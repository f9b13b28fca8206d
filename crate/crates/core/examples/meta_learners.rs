//! Imputed-outcome S/T/X/DR learners on a censored trial, scored against the true CATE.

use anyhow::Result;
use survhte::baselearn::{LearnerKind, Tuning};
use survhte::cate::{fit_imputed_meta, MetaOptions, Variant};
use survhte::datagen::{build_dataset, DatasetSpec, Scenario};
use survhte::impute::{FittedImputer, ImputeMethod, ImputeOptions};
use survhte::metrics::{ate_bias, cate_rmse};

fn main() -> Result<()> {
    let ds = build_dataset(&DatasetSpec::new(Scenario::C, "RCT-50".parse()?, 4000, 11))?;
    let train = ds.subset(&(0..3000).collect::<Vec<_>>());
    let test = ds.subset(&(3000..4000).collect::<Vec<_>>());
    let h = ds.horizon;

    let imp = FittedImputer::fit(
        ImputeMethod::PseudoObs,
        &train.obs_times(),
        &train.events(),
        ImputeOptions::default(),
    )?;
    let ids: Vec<usize> = train.units.iter().map(|u| u.id).collect();
    // the estimand is RMST at h, so surrogates are truncated the same way
    let y: Vec<f64> = imp
        .impute_in_sample(&ids)?
        .iter()
        .map(|r| r.surrogate.min(h))
        .collect();

    let truth = test.true_cates();
    let delta = truth.iter().sum::<f64>() / truth.len() as f64;
    let x = train.covariates();
    for kind in [LearnerKind::Lasso, LearnerKind::RandomForest] {
        for v in [Variant::S, Variant::T, Variant::X, Variant::DR] {
            let m = fit_imputed_meta(
                v,
                x.view(),
                &train.treatments(),
                &y,
                &Tuning::grid(kind),
                &MetaOptions::default(),
            )?;
            let tau = m.predict(test.covariates().view()).to_vec();
            println!(
                "{kind:>5} {v:>2}: CATE RMSE {:.3}, ATE bias {:+.3}",
                cate_rmse(&tau, &truth)?,
                ate_bias(&tau, delta)?
            );
        }
    }
    Ok(())
}
