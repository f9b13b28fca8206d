use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    build_dataset, delta_for, group_seed, permutation, pool_spec, run_split, CellRecord,
    ExperimentConfig, SplitJob,
};
use crate::datagen::io::{fmt_real, write_atomic};
use crate::error::{Error, Result};
use crate::metrics::{DatasetKey, MethodKey};
use crate::rng::derive_seed;

pub const CONVERGENCE_CSV_HEADER: &str =
    "scenario,config,size_index,train_size,split_seed,family,variant,imputer,base_learner,n_ok,n_failed,median_rmse,mean_rmse";

/// Test RMSE summary of one method at one training size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub scenario: String,
    pub config: String,
    pub size_index: usize,
    pub train_size: usize,
    /// Seed of the training draws at this size position.
    pub split_seed: u64,
    pub method: MethodKey,
    pub n_ok: usize,
    pub n_failed: usize,
    pub median_rmse: Option<f64>,
    pub mean_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub config: ExperimentConfig,
    pub train_sizes: Vec<usize>,
    /// `(size_index, record)` for every cell.
    pub records: Vec<(usize, CellRecord)>,
    pub points: Vec<ConvergencePoint>,
}

impl ConvergenceReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, render_convergence_csv(&self.points).as_bytes())
    }
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

pub fn render_convergence_csv(points: &[ConvergencePoint]) -> String {
    let mut out = String::from(CONVERGENCE_CSV_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            p.scenario,
            p.config,
            p.size_index,
            p.train_size,
            p.split_seed,
            p.method.family,
            p.method.variant,
            p.method.imputer,
            p.method.base_learner,
            p.n_ok,
            p.n_failed,
            p.median_rmse.map(fmt_real).unwrap_or_default(),
            p.mean_rmse.map(fmt_real).unwrap_or_default(),
        ));
    }
    out
}

/// Rerun the cell loop at each training size. Validation and test rows are
/// fixed per repeat; each size position draws its own training rows from the
/// remainder of the pool.
pub fn convergence_run(cfg: &ExperimentConfig, train_sizes: &[usize]) -> Result<ConvergenceReport> {
    cfg.validate()?;
    if train_sizes.is_empty() {
        return Err(Error::EmptyRequest(
            "convergence needs at least one training size",
        ));
    }
    let room = cfg.pool_size - cfg.n_val - cfg.n_test;
    if let Some(&s) = train_sizes.iter().find(|&&s| s == 0 || s > room) {
        return Err(Error::InvalidArgument(format!(
            "training size {s} must lie in 1..={room} (pool minus validation and test)"
        )));
    }
    let mut records = Vec::new();
    let mut points = Vec::new();
    for &scenario in &cfg.scenarios {
        for &config in &cfg.configs {
            let gseed = group_seed(cfg, scenario, config);
            let pool = build_dataset(&pool_spec(cfg, scenario, config, None))?;
            let delta = delta_for(cfg, &pool)?;
            let jobs: Vec<(usize, usize)> = (0..train_sizes.len())
                .flat_map(|si| (0..cfg.repeats).map(move |r| (si, r)))
                .collect();
            let out: Vec<(usize, Vec<CellRecord>)> = jobs
                .into_par_iter()
                .map(|(si, r)| {
                    let perm = permutation(pool.len(), gseed, r as u64);
                    let val = perm[..cfg.n_val].to_vec();
                    let test = perm[cfg.n_val..cfg.n_val + cfg.n_test].to_vec();
                    let rest = &perm[cfg.n_val + cfg.n_test..];
                    let draw = permutation(rest.len(), derive_seed(gseed, si as u64 + 1), r as u64);
                    let train: Vec<usize> =
                        draw[..train_sizes[si]].iter().map(|&j| rest[j]).collect();
                    let job = SplitJob {
                        key: DatasetKey {
                            scenario: scenario.to_string(),
                            config: config.to_string(),
                            repeat: r,
                        },
                        pool: &pool,
                        train,
                        val,
                        test,
                        delta,
                        seed: derive_seed(derive_seed(gseed, r as u64), si as u64 + 1),
                    };
                    log::info!("{} size {}: fitting", job.key, train_sizes[si]);
                    (si, run_split(cfg, &job).0)
                })
                .collect();
            for (si, &size) in train_sizes.iter().enumerate() {
                for entry in &cfg.roster {
                    let key = entry.method_key();
                    let cells: Vec<&CellRecord> = out
                        .iter()
                        .filter(|(s, _)| *s == si)
                        .flat_map(|(_, rows)| rows.iter())
                        .filter(|r| r.method == key)
                        .collect();
                    let mut ok: Vec<f64> = cells.iter().filter_map(|r| r.cate_rmse).collect();
                    let mean = (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64);
                    points.push(ConvergencePoint {
                        scenario: scenario.to_string(),
                        config: config.to_string(),
                        size_index: si,
                        train_size: size,
                        split_seed: derive_seed(gseed, si as u64 + 1),
                        method: key,
                        n_ok: ok.len(),
                        n_failed: cells.len() - ok.len(),
                        median_rmse: median(&mut ok),
                        mean_rmse: mean,
                    });
                }
            }
            records.extend(
                out.into_iter()
                    .flat_map(|(si, rows)| rows.into_iter().map(move |r| (si, r))),
            );
        }
    }
    Ok(ConvergenceReport {
        config: cfg.clone(),
        train_sizes: train_sizes.to_vec(),
        records,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselearn::LearnerKind;
    use crate::bench::RosterEntry;
    use crate::cate::Variant;
    use crate::datagen::{CausalConfig, CausalKind, Scenario};
    use crate::impute::ImputeMethod;

    fn cfg() -> ExperimentConfig {
        ExperimentConfig {
            scenarios: vec![Scenario::C],
            configs: vec![CausalConfig::ignorable(CausalKind::Rct50)],
            n_train: 100,
            n_val: 200,
            n_test: 200,
            pool_size: 2000,
            repeats: 1,
            seed: 11,
            roster: vec![
                RosterEntry::imputed(Variant::S, ImputeMethod::Margin, LearnerKind::Lasso),
                RosterEntry::imputed(Variant::T, ImputeMethod::Margin, LearnerKind::Lasso),
            ],
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn one_size_gives_one_row_per_method() {
        let rep = convergence_run(&cfg(), &[50]).unwrap();
        assert_eq!(rep.points.len(), 2);
        let csv = render_convergence_csv(&rep.points);
        assert_eq!(csv.lines().next(), Some(CONVERGENCE_CSV_HEADER));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn repeated_sizes_use_different_draws() {
        let rep = convergence_run(&cfg(), &[100, 100]).unwrap();
        let s: Vec<&ConvergencePoint> = rep
            .points
            .iter()
            .filter(|p| p.method.variant == "S")
            .collect();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].train_size, s[1].train_size);
        assert_ne!(s[0].split_seed, s[1].split_seed);
        assert_ne!(s[0].median_rmse, s[1].median_rmse);
    }

    #[test]
    fn oversized_training_request_is_rejected() {
        assert!(convergence_run(&cfg(), &[1700]).is_err());
        assert!(convergence_run(&cfg(), &[]).is_err());
    }
}
