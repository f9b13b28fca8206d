//! Acceptance runner: one PASS/FAIL line per criterion, non-zero exit on any FAIL.
//! Built with `harness = false` so the lines are printed by plain `cargo test`.

mod common;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::{
    check_floor, check_km_ecdf, check_label_symmetry, check_no_censoring_collapse,
    check_pseudo_fast_path, check_rank_table, ensure, fuzzed_grid, kkt_residual, lasso_tuning,
    linear_rct, random_design, survival_sample, Check,
};
use ndarray::{concatenate, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use survhte::baselearn::{fit_logistic, DEFAULT_CLIP};
use survhte::bench::{render_metrics_csv, run_benchmark, ExperimentConfig};
use survhte::cate::{fit_double_ml, fit_imputed_meta, CateModel, MetaOptions, Variant};
use survhte::datagen::{
    build_dataset, population_ate, CausalConfig, DatasetSpec, Estimand, Scenario, SyntheticDataset,
};
use survhte::impute::{FittedImputer, ImputeMethod, ImputeOptions};
use survhte::metrics::{auc, cate_rmse, ctd_index, imputation_mae};
use survhte::rng::{stream, Purpose};
use survhte::rsf::{fit_rsf, RsfParams};

const SEED: u64 = 20_240_611;

fn cfg(s: &str) -> CausalConfig {
    s.parse().expect("known configuration")
}

fn dataset(
    scenario: Scenario,
    config: &str,
    n: usize,
    seed: u64,
) -> Result<SyntheticDataset, String> {
    build_dataset(&DatasetSpec::new(scenario, cfg(config), n, seed)).map_err(|e| e.to_string())
}

fn within(v: f64, target: f64, tol: f64) -> bool {
    (v - target).abs() <= tol
}

fn timed(budget: Duration, what: &str, start: Instant) -> Check {
    let took = start.elapsed();
    ensure!(
        took <= budget,
        "{what} took {:.1}s, budget {:.0}s",
        took.as_secs_f64(),
        budget.as_secs_f64()
    );
    Ok(())
}

fn censoring_rates(notes: &mut Vec<String>) -> Check {
    let start = Instant::now();
    let cells = [
        (Scenario::A, "RCT-50", 0.203),
        (Scenario::C, "OBS-CPS", 0.393),
        (Scenario::C, "OBS-CPS-InfC", 0.885),
        (Scenario::D, "RCT-50", 0.913),
        (Scenario::D, "OBS-CPS-InfC", 0.366),
    ];
    let mut bad = Vec::new();
    for (s, c, want) in cells {
        let rate = dataset(s, c, 50_000, SEED)?.censoring_rate();
        notes.push(format!("{s}/{c} {rate:.3} (target {want})"));
        if !within(rate, want, 0.01) {
            bad.push(format!("{s}/{c} {rate:.4} vs {want}"));
        }
    }
    ensure!(bad.is_empty(), "{}", bad.join("; "));
    timed(Duration::from_secs(30), "censoring summary", start)
}

fn treatment_rates(notes: &mut Vec<String>) -> Check {
    let cells = [
        ("RCT-50", 0.502, 0.005),
        ("RCT-5", 0.049, 0.005),
        ("OBS-UConf", 0.539, 0.01),
    ];
    let mut bad = Vec::new();
    for (c, want, tol) in cells {
        let rate = dataset(Scenario::A, c, 50_000, SEED)?.treatment_rate();
        notes.push(format!("{c} {rate:.3} (target {want})"));
        if !within(rate, want, tol) {
            bad.push(format!("{c} {rate:.4} vs {want} +- {tol}"));
        }
    }
    ensure!(bad.is_empty(), "{}", bad.join("; "));
    Ok(())
}

fn ate(s: Scenario, c: &CausalConfig) -> Result<f64, String> {
    population_ate(s, c, Estimand::Rmst, f64::INFINITY, 50_000, SEED).map_err(|e| e.to_string())
}

fn ate_values(notes: &mut Vec<String>) -> Check {
    let mut bad = Vec::new();
    for c in CausalConfig::benchmark_set() {
        let uconf = c.to_string().starts_with("OBS-UConf");
        let (target, tol) = if uconf { (0.004, 0.02) } else { (0.163, 0.02) };
        let a = ate(Scenario::A, &c)?;
        notes.push(format!("A/{c} {a:.4}"));
        if !within(a, target, tol) {
            bad.push(format!("A/{c} {a:.4} vs {target}"));
        }
        if !uconf {
            let v = ate(Scenario::C, &c)?;
            notes.push(format!("C/{c} {v:.4}"));
            if !within(v, 0.750, 0.05) {
                bad.push(format!("C/{c} {v:.4} vs 0.750"));
            }
        }
    }
    // closed form: integral over [0, 1] of 2(sqrt(x) - 0.3)
    let analytic = 2.0 * (2.0 / 3.0 - 0.3);
    notes.push(format!("C analytic {analytic:.4}"));
    if !within(analytic, 0.750, 0.05) {
        bad.push(format!("analytic {analytic:.4} outside the band"));
    }
    ensure!(bad.is_empty(), "{}", bad.join("; "));
    Ok(())
}

/// Fit on the first 5000 units, score on the next 5000.
fn holdout_mae(s: Scenario, method: ImputeMethod) -> Result<f64, String> {
    let ds = dataset(s, "RCT-50", 10_000, SEED)?;
    let (train, test) = (
        ds.subset(&(0..5000).collect::<Vec<_>>()),
        ds.subset(&(5000..10_000).collect::<Vec<_>>()),
    );
    let imp = FittedImputer::fit(
        method,
        &train.obs_times(),
        &train.events(),
        ImputeOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let ids: Vec<usize> = test.units.iter().map(|u| u.id).collect();
    let rows = imp
        .impute(&ids, &test.obs_times(), &test.events())
        .map_err(|e| e.to_string())?;
    let sur: Vec<f64> = rows.iter().map(|r| r.surrogate).collect();
    imputation_mae(&sur, &test.factual_times()).map_err(|e| e.to_string())
}

fn imputation_brackets(notes: &mut Vec<String>) -> Check {
    let start = Instant::now();
    let a = holdout_mae(Scenario::A, ImputeMethod::PseudoObs)?;
    let e = holdout_mae(Scenario::E, ImputeMethod::Margin)?;
    notes.push(format!("A pseudo-obs {a:.3}, E margin {e:.3}"));
    ensure!(
        (0.39..=0.49).contains(&a),
        "A pseudo-obs MAE {a:.4} outside [0.39, 0.49]"
    );
    ensure!(
        (1.45..=1.75).contains(&e),
        "E margin MAE {e:.4} outside [1.45, 1.75]"
    );
    timed(Duration::from_secs(120), "imputation brackets", start)
}

fn propensity_auc(notes: &mut Vec<String>) -> Check {
    let mut bad = Vec::new();
    for (c, want) in [("OBS-CPS", 0.661), ("OBS-NoPos", 0.820)] {
        let ds = dataset(Scenario::A, c, 10_000, SEED)?;
        let (train, test) = (
            ds.subset(&(0..5000).collect::<Vec<_>>()),
            ds.subset(&(5000..10_000).collect::<Vec<_>>()),
        );
        let m = fit_logistic(train.covariates().view(), &train.treatments(), DEFAULT_CLIP)
            .map_err(|e| e.to_string())?;
        let scores = m.predict(test.covariates().view());
        let v = auc(scores.as_slice().expect("contiguous"), &test.treatments())
            .map_err(|e| e.to_string())?;
        notes.push(format!("{c} {v:.3} (target {want})"));
        if !within(v, want, 0.02) {
            bad.push(format!("{c} {v:.4} vs {want}"));
        }
    }
    ensure!(bad.is_empty(), "{}", bad.join("; "));
    Ok(())
}

fn with_w(ds: &SyntheticDataset) -> Array2<f64> {
    let w = Array2::from_shape_fn((ds.len(), 1), |(i, _)| f64::from(ds.units[i].w));
    concatenate(Axis(1), &[ds.covariates().view(), w.view()]).expect("same rows")
}

fn rsf_concordance(notes: &mut Vec<String>) -> Check {
    let ds = dataset(Scenario::A, "RCT-50", 7500, SEED)?;
    let (train, test) = (
        ds.subset(&(0..5000).collect::<Vec<_>>()),
        ds.subset(&(5000..7500).collect::<Vec<_>>()),
    );
    let params = RsfParams {
        seed: SEED,
        ..RsfParams::default()
    };
    let m = fit_rsf(
        with_w(&train).view(),
        &train.obs_times(),
        &train.events(),
        params,
    )
    .map_err(|e| e.to_string())?;
    let curves = m.predict_survival_curves(with_w(&test).view());
    let c = ctd_index(&curves, &test.obs_times(), &test.events()).map_err(|e| e.to_string())?;
    notes.push(format!("Ctd {c:.3}"));
    ensure!(
        (0.54..=0.62).contains(&c),
        "Ctd {c:.4} outside [0.54, 0.62]"
    );
    Ok(())
}

fn property_suites(notes: &mut Vec<String>) -> Check {
    let start = Instant::now();
    // floor: 10^5 randomized units (50 fits of 1000 plus 1000 queries each)
    let mut units = 0;
    for s in 0..50 {
        let (t, e) = survival_sample(1000, 0.2 + 0.6 * (s as f64 / 50.0), 1000 + s);
        let (qt, qe) = survival_sample(1000, 0.5, 5000 + s);
        check_floor(&t, &e, &qt, &qe).map_err(|m| format!("floor: {m}"))?;
        units += 2000;
    }
    notes.push(format!("floor on {units} units"));
    let mut rng = stream(SEED, 0, Purpose::Covariates);
    for s in 0..50 {
        let n = rng.random_range(2..=200);
        let (t, e) = survival_sample(n, rng.random_range(0.0..0.8), 10_000 + s);
        check_pseudo_fast_path(&t, &e, 1e-10)
            .map_err(|m| format!("pseudo jackknife (n={n}): {m}"))?;
    }
    notes.push("pseudo-obs jackknife on 50 sets".into());
    for s in 0..20 {
        let (t, _) = survival_sample(rng.random_range(1..300), 0.0, 20_000 + s);
        if t.len() >= 2 {
            check_no_censoring_collapse(&t).map_err(|m| format!("no-censoring collapse: {m}"))?;
        }
        check_km_ecdf(&t).map_err(|m| format!("KM/ECDF: {m}"))?;
    }
    let mut worst: f64 = 0.0;
    for s in 0..20 {
        let (x, y) = random_design(
            rng.random_range(20..300),
            rng.random_range(1..10),
            30_000 + s,
        );
        let alpha = [0.001, 0.01, 0.1, 1.0][s as usize % 4];
        worst = worst.max(kkt_residual(x.view(), &y, alpha)?);
    }
    notes.push(format!("lasso KKT residual {worst:.1e}"));
    ensure!(worst <= 1e-5, "lasso KKT residual {worst:e} above 1e-5");
    for s in 0..3 {
        check_label_symmetry(40_000 + s).map_err(|m| format!("label symmetry: {m}"))?;
    }
    for s in 0..200 {
        let grid = fuzzed_grid(rng.random_range(1..8), rng.random_range(1..7), 50_000 + s);
        check_rank_table(&grid).map_err(|m| format!("rank table: {m}"))?;
    }
    timed(Duration::from_secs(60), "property suites", start)
}

fn estimator_sanity(notes: &mut Vec<String>) -> Check {
    let (x, w, y, tau) = linear_rct(2000, SEED, 0.2);
    for v in [Variant::T, Variant::S, Variant::X, Variant::DR] {
        let m = fit_imputed_meta(
            v,
            x.view(),
            &w,
            &y,
            &lasso_tuning(),
            &MetaOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        let rmse = cate_rmse(m.predict(x.view()).as_slice().expect("contiguous"), &tau)
            .map_err(|e| e.to_string())?;
        notes.push(format!("{v} {rmse:.3}"));
        ensure!(rmse < 0.1, "{v} CATE RMSE {rmse:.4} >= 0.1");
    }

    let mut rng = stream(SEED, 1, Purpose::Covariates);
    let noise = Normal::new(0.0, 0.1).expect("valid sd");
    let n = 2000;
    let x = Array2::from_shape_fn((n, 3), |_| rng.random::<f64>());
    let w: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| x[[i, 0]] + 2.0 * f64::from(w[i]) + noise.sample(&mut rng))
        .collect();
    let dml_ate = |x: &Array2<f64>, w: &[u8], y: &[f64], seed| -> Result<f64, String> {
        match fit_double_ml(x.view(), w, y, &lasso_tuning(), 2, seed).map_err(|e| e.to_string())? {
            CateModel::DoubleMl(m) => Ok(m.ate),
            _ => Err("Double-ML returned another model".into()),
        }
    };
    let a = dml_ate(&x, &w, &y, SEED)?;
    notes.push(format!("DML RCT ATE {a:.3}"));
    ensure!(within(a, 2.0, 0.05), "Double-ML ATE {a:.4} vs 2");

    // confounded: treatment follows x1, outcome rises steeply in x1
    let x = Array2::from_shape_fn((n, 2), |_| rng.random::<f64>());
    let w: Vec<u8> = (0..n)
        .map(|i| u8::from(x[[i, 0]] + noise.sample(&mut rng) > 0.5))
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 3.0 * x[[i, 0]] + f64::from(w[i]) + noise.sample(&mut rng))
        .collect();
    let arm_mean = |arm: u8| {
        let v: Vec<f64> = (0..n).filter(|&i| w[i] == arm).map(|i| y[i]).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let naive_bias = arm_mean(1) - arm_mean(0) - 1.0;
    let dml_bias = dml_ate(&x, &w, &y, SEED + 1)? - 1.0;
    notes.push(format!(
        "confounded: naive bias {naive_bias:.3}, DML bias {dml_bias:.3}"
    ));
    ensure!(
        naive_bias.abs() > 0.5,
        "naive bias {naive_bias:.4} is not > 0.5"
    );
    ensure!(
        dml_bias.abs() < 0.1,
        "Double-ML bias {dml_bias:.4} is not < 0.1"
    );
    Ok(())
}

fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn non_reproducibility(notes: &mut Vec<String>) -> Check {
    let path = repo_root().join("README.md");
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let section = text
        .split("\n## ")
        .find(|s| s.starts_with("What is not reproduced"))
        .ok_or("README has no 'What is not reproduced' section")?;
    for needle in [
        "53-variant",
        "Borda",
        "DeepSurv",
        "DeepHit",
        "SurvITE",
        "CSF",
        "causal forest",
        "win-rate",
    ] {
        ensure!(
            section.contains(needle),
            "non-reproducibility section does not mention '{needle}'"
        );
    }
    notes.push("README section present".into());
    Ok(())
}

fn determinism(notes: &mut Vec<String>) -> Check {
    let start = Instant::now();
    let cfg = ExperimentConfig::load(&repo_root().join("configs/mini_benchmark.json"))
        .map_err(|e| e.to_string())?;
    ensure!(
        cfg.scenarios == [Scenario::C]
            && cfg.configs.len() == 1
            && cfg.repeats == 2
            && cfg.roster.len() == 6,
        "mini benchmark config is not 1 scenario C config x 2 repeats x 6 cells"
    );
    let run = |threads: usize| -> Result<String, String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        let rep = pool
            .install(|| run_benchmark(&cfg))
            .map_err(|e| e.to_string())?;
        Ok(render_metrics_csv(&rep.records))
    };
    let (a, b) = (run(1)?, run(4)?);
    let rows = a.lines().count() - 1;
    notes.push(format!(
        "{rows} rows, {:.1}s for both runs",
        start.elapsed().as_secs_f64()
    ));
    ensure!(
        rows > 0 && !a.contains(",failed,"),
        "mini benchmark produced failed or no cells"
    );
    ensure!(a == b, "metrics.csv differs between runs");
    timed(Duration::from_secs(600), "mini benchmark pair", start)
}

type Criterion = (&'static str, fn(&mut Vec<String>) -> Check);

fn main() {
    let criteria: [Criterion; 10] = [
        ("censoring rates at n=50000", censoring_rates),
        ("treatment rates", treatment_rates),
        ("ATE values", ate_values),
        ("imputation MAE brackets", imputation_brackets),
        ("propensity AUC", propensity_auc),
        ("survival forest concordance", rsf_concordance),
        ("property suites", property_suites),
        ("estimator sanity", estimator_sanity),
        ("non-reproducibility statement", non_reproducibility),
        ("mini benchmark determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut notes = Vec::new();
        let result = run(&mut notes);
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(()) => println!(
                "PASS {:>2} {name} [{secs:.1}s]: {}",
                i + 1,
                notes.join(", ")
            ),
            Err(msg) => {
                failed += 1;
                println!(
                    "FAIL {:>2} {name} [{secs:.1}s]: {msg} | {}",
                    i + 1,
                    notes.join(", ")
                );
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
