//! Compare the three censoring imputers: fit on a training split, impute a
//! held-out split and score against the true event times.

use anyhow::Result;
use survhte::datagen::{build_dataset, DatasetSpec, Scenario};
use survhte::impute::{FittedImputer, ImputeMethod, ImputeOptions};
use survhte::metrics::imputation_mae;

fn main() -> Result<()> {
    for (scenario, config) in [
        (Scenario::A, "RCT-50"),
        (Scenario::E, "RCT-50"),
        (Scenario::C, "OBS-CPS-InfC"),
    ] {
        let ds = build_dataset(&DatasetSpec::new(scenario, config.parse()?, 10_000, 3))?;
        let train = ds.subset(&(0..5000).collect::<Vec<_>>());
        let test = ds.subset(&(5000..10_000).collect::<Vec<_>>());
        let ids: Vec<usize> = test.units.iter().map(|u| u.id).collect();
        print!(
            "{scenario}/{config:<13} censoring {:.2} |",
            ds.censoring_rate()
        );
        for method in ImputeMethod::ALL {
            let imp = FittedImputer::fit(
                method,
                &train.obs_times(),
                &train.events(),
                ImputeOptions::default(),
            )?;
            let rows = imp.impute(&ids, &test.obs_times(), &test.events())?;
            let floored = rows.iter().filter(|r| r.floored).count();
            let s: Vec<f64> = rows.iter().map(|r| r.surrogate).collect();
            print!(
                " {method} MAE {:.3} ({floored} floored) |",
                imputation_mae(&s, &test.factual_times())?
            );
        }
        println!();
    }
    Ok(())
}
