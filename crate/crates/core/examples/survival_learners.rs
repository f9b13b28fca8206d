//! Survival S-, T- and matching learners fitted directly on (time, event).

use anyhow::Result;
use survhte::cate::{fit_survival_meta, Variant, DEFAULT_MATCHING_K};
use survhte::datagen::{build_dataset, DatasetSpec, Estimand, Scenario};
use survhte::metrics::{ate_bias, cate_rmse};
use survhte::rsf::RsfParams;

fn main() -> Result<()> {
    let ds = build_dataset(&DatasetSpec::new(Scenario::B, "OBS-CPS".parse()?, 3000, 2))?;
    let train = ds.subset(&(0..2000).collect::<Vec<_>>());
    let test = ds.subset(&(2000..3000).collect::<Vec<_>>());
    let truth = test.true_cates();
    let delta = truth.iter().sum::<f64>() / truth.len() as f64;
    for v in [Variant::S, Variant::T, Variant::Matching] {
        let m = fit_survival_meta(
            v,
            train.covariates().view(),
            &train.treatments(),
            &train.obs_times(),
            &train.events(),
            RsfParams::default(),
            Estimand::Rmst,
            ds.horizon,
            DEFAULT_MATCHING_K,
        )?;
        let tau = m.predict(test.covariates().view()).to_vec();
        println!(
            "{v:>8}: CATE RMSE {:.3}, ATE bias {:+.3}",
            cate_rmse(&tau, &truth)?,
            ate_bias(&tau, delta)?
        );
    }
    Ok(())
}
