//! Kaplan-Meier, RMST and the time-dependent C-index of a survival forest.

use anyhow::Result;
use ndarray::{concatenate, Array2, Axis};
use survhte::datagen::{
    build_dataset, CausalConfig, CausalKind, DatasetSpec, Scenario, SyntheticDataset,
};
use survhte::metrics::ctd_index;
use survhte::rsf::{fit_rsf, RsfParams};
use survhte::survcurve::fit_km;

fn features(ds: &SyntheticDataset) -> Result<Array2<f64>> {
    let w = Array2::from_shape_fn((ds.len(), 1), |(i, _)| f64::from(ds.units[i].w));
    Ok(concatenate(Axis(1), &[ds.covariates().view(), w.view()])?)
}

fn main() -> Result<()> {
    let spec = DatasetSpec::new(
        Scenario::A,
        CausalConfig::ignorable(CausalKind::Rct50),
        3000,
        1,
    );
    let ds = build_dataset(&spec)?;
    let km = fit_km(&ds.obs_times(), &ds.events())?;
    for h in [0.5, 1.0, 2.0] {
        println!(
            "KM: S({h}) = {:.3}, RMST({h}) = {:.3}",
            km.eval(h),
            km.rmst(h)
        );
    }

    let train = ds.subset(&(0..2000).collect::<Vec<_>>());
    let test = ds.subset(&(2000..3000).collect::<Vec<_>>());
    let model = fit_rsf(
        features(&train)?.view(),
        &train.obs_times(),
        &train.events(),
        RsfParams::default(),
    )?;
    let curves = model.predict_survival_curves(features(&test)?.view());
    println!(
        "forest of {} trees, test Ctd = {:.3}",
        model.trees.len(),
        ctd_index(&curves, &test.obs_times(), &test.events())?
    );
    Ok(())
}
