//! Experiment harness: pooled generation, repeated splits, validation-based
//! selection, test scoring and report files.

mod config;
mod convergence;
mod report;

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{full_roster, ExperimentConfig, GridPolicy, RankLevel, RosterEntry};
pub use convergence::{
    convergence_run, render_convergence_csv, ConvergencePoint, ConvergenceReport,
    CONVERGENCE_CSV_HEADER,
};
pub use report::{
    read_metrics_csv, render_metrics_csv, render_report, write_rank_files, ReportFormat,
    METRICS_CSV_HEADER,
};

use crate::baselearn::{
    default_grid, fit_logistic, LearnerKind, LearnerSpec, Tuning, DEFAULT_CLIP,
};
use crate::cate::{
    fit_double_ml, fit_imputed_meta, fit_survival_meta, with_treatment, CateModel, Family,
    MetaOptions,
};

use crate::datagen::{
    build_dataset, population_ate, write_dataset_csv, CausalConfig, DatasetSpec, Estimand,
    Scenario, SyntheticDataset,
};
use crate::error::{Error, Result};
use crate::impute::{FittedImputer, ImputeMethod, ImputeOptions};
use crate::metrics::{
    ate_bias, auc, cate_rmse, ctd_index, imputation_mae, rank_table, AuxMetrics, DatasetKey,
    MethodKey, MetricRecord, RankMetric, RankTable,
};
use crate::rng::{derive_seed, set_fingerprint, stream, Purpose};
use crate::rsf::{rsf_grid, RsfParams};

/// Size of the sample used for the true average effect.
pub const DELTA_SAMPLE: usize = 50_000;
/// Fixed seed of that sample, shared by every run.
pub const DELTA_SEED: u64 = 0x5EED_0DE1;

/// Generate a dataset and write it as CSV. Nothing is written on error.
pub fn export_dataset(spec: &DatasetSpec, path: &Path) -> Result<SyntheticDataset> {
    let ds = build_dataset(spec)?;
    write_dataset_csv(&ds, path)?;
    Ok(ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
}

/// Outcome of one (dataset, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub dataset: DatasetKey,
    pub method: MethodKey,
    pub level: RankLevel,
    pub status: CellStatus,
    /// Error code of a failed cell.
    pub error: Option<String>,
    pub cate_rmse: Option<f64>,
    pub ate_bias: Option<f64>,
    pub val_rmse: Option<f64>,
    pub aux: AuxMetrics,
    /// Winning hyperparameters (and, at family level, imputer and learner).
    pub selected: String,
    /// Rows the fitted models consumed.
    pub fit_rows: usize,
}

impl CellRecord {
    fn failed(dataset: &DatasetKey, method: MethodKey, level: RankLevel, code: &str) -> Self {
        CellRecord {
            dataset: dataset.clone(),
            method,
            level,
            status: CellStatus::Failed,
            error: Some(code.to_string()),
            cate_rmse: None,
            ate_bias: None,
            val_rmse: None,
            aux: AuxMetrics::default(),
            selected: String::new(),
            fit_rows: 0,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == CellStatus::Ok
    }

    pub fn metric_record(&self) -> Option<MetricRecord> {
        Some(MetricRecord {
            dataset: self.dataset.clone(),
            method: self.method.clone(),
            cate_rmse: self.cate_rmse?,
            ate_bias: self.ate_bias?,
            aux: self.aux,
        })
    }
}

/// Row accounting for one dataset repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAudit {
    pub dataset: DatasetKey,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Train, validation and test ids are pairwise disjoint.
    pub disjoint: bool,
    /// Cells whose fits consumed exactly the training rows.
    pub cells_checked: usize,
    /// Cells whose fits saw any other row.
    pub leaks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaEntry {
    pub scenario: Scenario,
    pub config: CausalConfig,
    pub repeat_pool: Option<usize>,
    pub horizon: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
    pub toolkit_version: String,
    pub n_records: usize,
    pub n_failed: usize,
    pub rank_level: RankLevel,
    pub deltas: Vec<DeltaEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: ExperimentConfig,
    pub records: Vec<CellRecord>,
    pub audit: Vec<SplitAudit>,
    pub rank: Option<RankTable>,
    /// Why no rank table was built, when records exist.
    pub rank_error: Option<String>,
    pub provenance: Provenance,
}

impl BenchReport {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let mut body = serde_json::to_string_pretty(self)?;
        body.push('\n');
        crate::datagen::io::write_atomic(path, body.as_bytes())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// SHA-256 of the configuration JSON, ignoring the output directory.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.out = None;
    let digest = Sha256::digest(serde_json::to_vec(&c).expect("config serializes"));
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// FNV-1a, for stable labels derived from names.
fn label(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

fn group_seed(cfg: &ExperimentConfig, scenario: Scenario, config: CausalConfig) -> u64 {
    derive_seed(cfg.seed, label(&format!("{scenario}/{config}")))
}

fn pool_spec(
    cfg: &ExperimentConfig,
    scenario: Scenario,
    config: CausalConfig,
    pool_index: Option<usize>,
) -> DatasetSpec {
    let mut seed = group_seed(cfg, scenario, config);
    if let Some(r) = pool_index {
        seed = derive_seed(seed, r as u64 + 1);
    }
    DatasetSpec::new(scenario, config, cfg.pool_size, seed)
        .with_estimand(cfg.estimand)
        .with_horizon(cfg.horizon)
}

fn permutation(n: usize, seed: u64, index: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, index, Purpose::Split));
    idx
}

/// Train, validation and test row indices into the pool for one repeat.
pub fn split_indices(
    pool_len: usize,
    cfg: &ExperimentConfig,
    seed: u64,
    repeat: usize,
) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let perm = permutation(pool_len, seed, repeat as u64);
    let (tr, rest) = perm.split_at(cfg.n_train);
    let (va, rest) = rest.split_at(cfg.n_val);
    (tr.to_vec(), va.to_vec(), rest[..cfg.n_test].to_vec())
}

/// Index of the candidate with the lowest validation RMSE (first wins ties).
pub struct Selection {
    pub index: usize,
    pub model: CateModel,
    pub val_rmse: f64,
}

/// Pick the candidate with the smallest validation CATE RMSE; earlier
/// candidates win ties.
pub fn select_model(candidates: Vec<CateModel>, val: &SyntheticDataset) -> Result<Selection> {
    let x = val.covariates();
    let truth = val.true_cates();
    let mut best: Option<Selection> = None;
    for (index, model) in candidates.into_iter().enumerate() {
        let val_rmse = cate_rmse(
            model.predict(x.view()).as_slice().expect("contiguous"),
            &truth,
        )?;
        if best.as_ref().is_none_or(|b| val_rmse < b.val_rmse) {
            best = Some(Selection {
                index,
                model,
                val_rmse,
            });
        }
    }
    best.ok_or(Error::EmptyRequest(
        "model selection needs at least one candidate",
    ))
}

/// One hyperparameter setting of a cell.
#[derive(Debug, Clone, Copy)]
enum Candidate {
    Learner(LearnerSpec),
    Rsf(RsfParams),
}

impl Candidate {
    fn describe(&self) -> String {
        match self {
            Candidate::Learner(s) => s.to_string(),
            Candidate::Rsf(p) => format!(
                "rsf(trees={},min_split={},min_leaf={})",
                p.n_estimators, p.min_split, p.min_leaf
            ),
        }
    }
}

fn candidates(entry: &RosterEntry, policy: GridPolicy, seed: u64) -> Vec<Candidate> {
    match (entry.base_learner, policy) {
        (None, GridPolicy::Full) => rsf_grid(seed).into_iter().map(Candidate::Rsf).collect(),
        (None, GridPolicy::Reduced) => vec![Candidate::Rsf(RsfParams {
            seed,
            ..RsfParams::default()
        })],
        (Some(LearnerKind::RandomForest), GridPolicy::Reduced) => {
            vec![Candidate::Learner(LearnerSpec::forest(50, None))]
        }
        (Some(kind), _) => default_grid(kind)
            .into_iter()
            .map(Candidate::Learner)
            .collect(),
    }
}

/// Everything a cell may fit on: training rows only.
struct TrainView<'a> {
    ds: &'a SyntheticDataset,
    x: ndarray::Array2<f64>,
    w: Vec<u8>,
    outcomes: &'a BTreeMap<ImputeMethod, std::result::Result<Vec<f64>, String>>,
}

fn transform(estimand: Estimand, horizon: f64, t: f64) -> f64 {
    match estimand {
        Estimand::Rmst => t.min(horizon),
        Estimand::SurvProb => f64::from(u8::from(t > horizon)),
    }
}

struct Fitted {
    model: CateModel,
    rows: usize,
    fingerprint: u64,
}

fn fit_candidate(
    cfg: &ExperimentConfig,
    entry: &RosterEntry,
    cand: Candidate,
    train: &TrainView,
    seed: u64,
) -> Result<Fitted> {
    let x = train.x.view();
    let outcome = || -> Result<&Vec<f64>> {
        let imp = entry.imputer.expect("validated roster");
        train.outcomes[&imp]
            .as_ref()
            .map_err(|code| Error::InvalidArgument(format!("imputation failed: {code}")))
    };
    let model = match (entry.family, cand) {
        (Family::ImputedMeta, Candidate::Learner(spec)) => {
            let opts = MetaOptions {
                cross_fit_folds: cfg.cross_fit_folds,
                seed,
                ..MetaOptions::default()
            };
            fit_imputed_meta(
                entry.variant,
                x,
                &train.w,
                outcome()?,
                &Tuning::Fixed(spec),
                &opts,
            )?
        }
        (Family::DoubleMl, Candidate::Learner(spec)) => fit_double_ml(
            x,
            &train.w,
            outcome()?,
            &Tuning::Fixed(spec),
            cfg.cross_fit_folds,
            seed,
        )?,
        (Family::SurvMeta, Candidate::Rsf(params)) => fit_survival_meta(
            entry.variant,
            x,
            &train.w,
            &train.ds.obs_times(),
            &train.ds.events(),
            RsfParams { seed, ..params },
            train.ds.estimand,
            train.ds.horizon,
            cfg.matching_k,
        )?,
        _ => unreachable!("candidate kind follows the roster entry"),
    };
    let ids: Vec<usize> = train.ds.units.iter().map(|u| u.id).collect();
    Ok(Fitted {
        model,
        rows: train.x.nrows(),
        fingerprint: set_fingerprint(&ids),
    })
}

fn survival_ctd(model: &CateModel, test: &SyntheticDataset) -> Option<f64> {
    let x = test.covariates();
    let w: Vec<f64> = test.units.iter().map(|u| f64::from(u.w)).collect();
    let curves = match model {
        CateModel::SurvS { rsf, .. } => {
            rsf.predict_survival_curves(with_treatment(x.view(), &w).view())
        }
        CateModel::SurvT { rsf0, rsf1, .. } => x
            .rows()
            .into_iter()
            .zip(&test.units)
            .map(|(row, u)| if u.w == 1 { rsf1 } else { rsf0 }.predict_survival_curve(row))
            .collect(),
        _ => return None,
    };
    ctd_index(&curves, &test.obs_times(), &test.events()).ok()
}

struct Prepared<'a> {
    key: DatasetKey,
    train: TrainView<'a>,
    val: &'a SyntheticDataset,
    test: &'a SyntheticDataset,
    delta: f64,
    seed: u64,
    train_fingerprint: u64,
    impute_mae: BTreeMap<ImputeMethod, f64>,
    propensity_auc: Option<f64>,
}

struct CellResult {
    record: CellRecord,
    leaked: bool,
}

fn run_cell(cfg: &ExperimentConfig, entry: &RosterEntry, p: &Prepared) -> CellResult {
    let method = entry.method_key();
    let seed = derive_seed(p.seed, label(&method.to_string()));
    let val_x = p.val.covariates();
    let val_truth = p.val.true_cates();
    let mut best: Option<(f64, Candidate, Fitted)> = None;
    let mut first_error: Option<Error> = None;
    for cand in candidates(entry, cfg.grid, seed) {
        let scored = fit_candidate(cfg, entry, cand, &p.train, seed).and_then(|f| {
            let pred = f.model.predict(val_x.view());
            let r = cate_rmse(pred.as_slice().expect("contiguous"), &val_truth)?;
            if r.is_finite() {
                Ok((r, f))
            } else {
                Err(Error::NonFinite("validation predictions"))
            }
        });
        match scored {
            Ok((r, f)) => {
                if best.as_ref().is_none_or(|b| r < b.0) {
                    best = Some((r, cand, f));
                }
            }
            Err(e) => {
                log::debug!("{} {}: {} failed: {e}", p.key, method, cand.describe());
                first_error.get_or_insert(e);
            }
        }
    }
    let Some((val_rmse, cand, fitted)) = best else {
        let code = first_error.map_or("no_candidates", |e| e.code());
        log::warn!("{} {}: cell failed ({code})", p.key, method);
        return CellResult {
            record: CellRecord::failed(&p.key, method, RankLevel::Cell, code),
            leaked: false,
        };
    };
    let test_x = p.test.covariates();
    let tau = fitted.model.predict(test_x.view());
    let tau = tau.as_slice().expect("contiguous");
    let scored =
        cate_rmse(tau, &p.test.true_cates()).and_then(|r| Ok((r, ate_bias(tau, p.delta)?)));
    let (rmse, bias) = match scored {
        Ok((r, b)) if r.is_finite() && b.is_finite() => (r, b),
        Ok(_) => {
            return CellResult {
                record: CellRecord::failed(&p.key, method, RankLevel::Cell, "non_finite"),
                leaked: false,
            }
        }
        Err(e) => {
            return CellResult {
                record: CellRecord::failed(&p.key, method, RankLevel::Cell, e.code()),
                leaked: false,
            }
        }
    };
    let uses_propensity = entry.family == Family::DoubleMl
        || matches!(
            entry.variant,
            crate::cate::Variant::X | crate::cate::Variant::DR
        );
    let aux = AuxMetrics {
        impute_mae: entry.imputer.and_then(|m| p.impute_mae.get(&m).copied()),
        ctd: survival_ctd(&fitted.model, p.test),
        auc: if uses_propensity {
            p.propensity_auc
        } else {
            None
        },
    };
    CellResult {
        leaked: fitted.fingerprint != p.train_fingerprint || fitted.rows != p.train.ds.len(),
        record: CellRecord {
            dataset: p.key.clone(),
            method,
            level: RankLevel::Cell,
            status: CellStatus::Ok,
            error: None,
            cate_rmse: Some(rmse),
            ate_bias: Some(bias),
            val_rmse: Some(val_rmse),
            aux,
            selected: cand.describe(),
            fit_rows: fitted.rows,
        },
    }
}

/// Family-level rows: per (family, variant), the cell with the lowest
/// validation RMSE in roster order.
fn family_rows(cells: &[CellRecord]) -> Vec<CellRecord> {
    let mut groups: Vec<(MethodKey, Vec<&CellRecord>)> = Vec::new();
    for c in cells {
        let key = MethodKey {
            family: c.method.family.clone(),
            variant: c.method.variant.clone(),
            imputer: String::new(),
            base_learner: String::new(),
        };
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(c),
            None => groups.push((key, vec![c])),
        }
    }
    groups
        .into_iter()
        .map(|(key, members)| {
            let mut best: Option<&CellRecord> = None;
            for &m in &members {
                if let Some(v) = m.val_rmse {
                    if best.is_none_or(|b| v < b.val_rmse.expect("ok cell")) {
                        best = Some(m);
                    }
                }
            }
            match best {
                Some(b) => {
                    let mut r = b.clone();
                    r.selected = format!("{}; {}", b.method, b.selected);
                    r.method = key;
                    r.level = RankLevel::Family;
                    r
                }
                None => {
                    let code = members[0].error.clone().unwrap_or_else(|| "failed".into());
                    CellRecord::failed(&members[0].dataset, key, RankLevel::Family, &code)
                }
            }
        })
        .collect()
}

/// Surrogate outcomes (or the failure message) per imputer.
type ImputedOutcomes = BTreeMap<ImputeMethod, std::result::Result<Vec<f64>, String>>;

/// Fit the imputers the roster needs on the training split.
fn impute_train(
    roster: &[RosterEntry],
    train: &SyntheticDataset,
) -> (ImputedOutcomes, BTreeMap<ImputeMethod, f64>) {
    let methods: std::collections::BTreeSet<ImputeMethod> =
        roster.iter().filter_map(|e| e.imputer).collect();
    let times = train.obs_times();
    let events = train.events();
    let ids: Vec<usize> = train.units.iter().map(|u| u.id).collect();
    let truth = train.factual_times();
    let mut outcomes = BTreeMap::new();
    let mut maes = BTreeMap::new();
    for m in methods {
        let res = FittedImputer::fit(m, &times, &events, ImputeOptions::default())
            .and_then(|f| f.impute_in_sample(&ids));
        match res {
            Ok(rows) => {
                let s: Vec<f64> = rows.iter().map(|r| r.surrogate).collect();
                if let Ok(mae) = imputation_mae(&s, &truth) {
                    maes.insert(m, mae);
                }
                let y = s
                    .iter()
                    .map(|&t| transform(train.estimand, train.horizon, t))
                    .collect();
                outcomes.insert(m, Ok(y));
            }
            Err(e) => {
                outcomes.insert(m, Err(e.code().to_string()));
            }
        }
    }
    (outcomes, maes)
}

/// Inputs shared by `run_benchmark` and `convergence_run` for one split.
pub(crate) struct SplitJob<'a> {
    pub key: DatasetKey,
    pub pool: &'a SyntheticDataset,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub delta: f64,
    pub seed: u64,
}

pub(crate) fn run_split(cfg: &ExperimentConfig, job: &SplitJob) -> (Vec<CellRecord>, SplitAudit) {
    let train = job.pool.subset(&job.train);
    let val = job.pool.subset(&job.val);
    let test = job.pool.subset(&job.test);
    let id_sets = [&train, &val, &test].map(|d| {
        d.units
            .iter()
            .map(|u| u.id)
            .collect::<std::collections::HashSet<_>>()
    });
    let disjoint = id_sets[0].is_disjoint(&id_sets[1])
        && id_sets[0].is_disjoint(&id_sets[2])
        && id_sets[1].is_disjoint(&id_sets[2]);
    let (outcomes, impute_mae) = impute_train(&cfg.roster, &train);
    let x = train.covariates();
    let w = train.treatments();
    let propensity_auc = fit_logistic(x.view(), &w, DEFAULT_CLIP).ok().and_then(|g| {
        auc(
            g.predict(test.covariates().view())
                .as_slice()
                .expect("contiguous"),
            &test.treatments(),
        )
        .ok()
    });
    let train_ids: Vec<usize> = train.units.iter().map(|u| u.id).collect();
    let prepared = Prepared {
        key: job.key.clone(),
        train: TrainView {
            ds: &train,
            x,
            w,
            outcomes: &outcomes,
        },
        val: &val,
        test: &test,
        delta: job.delta,
        seed: job.seed,
        train_fingerprint: set_fingerprint(&train_ids),
        impute_mae,
        propensity_auc,
    };
    let results: Vec<CellResult> = cfg
        .roster
        .par_iter()
        .map(|e| run_cell(cfg, e, &prepared))
        .collect();
    let ok = results.iter().filter(|r| r.record.is_ok()).count();
    let audit = SplitAudit {
        dataset: job.key.clone(),
        n_train: train.len(),
        n_val: val.len(),
        n_test: test.len(),
        disjoint,
        cells_checked: ok,
        leaks: results.iter().filter(|r| r.leaked).count(),
    };
    let cells: Vec<CellRecord> = results.into_iter().map(|r| r.record).collect();
    (cells, audit)
}

pub(crate) fn delta_for(cfg: &ExperimentConfig, pool: &SyntheticDataset) -> Result<f64> {
    population_ate(
        pool.scenario,
        &pool.config,
        cfg.estimand,
        pool.horizon,
        DELTA_SAMPLE,
        DELTA_SEED,
    )
}

/// Records in a fixed order, ranked at the configured level.
fn assemble(
    cfg: &ExperimentConfig,
    records: Vec<CellRecord>,
    audit: Vec<SplitAudit>,
    deltas: Vec<DeltaEntry>,
) -> BenchReport {
    let (rank, rank_error) = match rank_records(
        &records,
        cfg.rank_level,
        RankMetric::CateRmse,
        &cfg.top_k,
        cfg.allow_missing,
    ) {
        Ok(t) => (t, None),
        Err(e) => (None, Some(e.to_string())),
    };
    let provenance = Provenance {
        config_sha256: config_hash(cfg),
        seed: cfg.seed,
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        n_records: records.len(),
        n_failed: records.iter().filter(|r| !r.is_ok()).count(),
        rank_level: cfg.rank_level,
        deltas,
    };
    BenchReport {
        config: cfg.clone(),
        records,
        audit,
        rank,
        rank_error,
        provenance,
    }
}

/// Rank successful records at one level. `Ok(None)` when there is nothing to rank.
pub fn rank_records(
    records: &[CellRecord],
    level: RankLevel,
    metric: RankMetric,
    ks: &[usize],
    allow_missing: bool,
) -> Result<Option<RankTable>> {
    let at_level: Vec<&CellRecord> = records.iter().filter(|r| r.level == level).collect();
    let ok: Vec<MetricRecord> = at_level.iter().filter_map(|r| r.metric_record()).collect();
    if ok.is_empty() {
        return Ok(None);
    }
    // a failed cell has no metric, which the rank layer sees as a missing cell
    let failed: Vec<String> = at_level
        .iter()
        .filter(|r| !r.is_ok())
        .map(|r| format!("{} / {}", r.dataset, r.method))
        .collect();
    if !failed.is_empty() && !allow_missing {
        return Err(Error::MissingCells(failed));
    }
    if !failed.is_empty() {
        log::warn!(
            "ranking over complete datasets only; {} failed cells",
            failed.len()
        );
    }
    rank_table(&ok, metric, ks, allow_missing).map(Some)
}

pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let mut records = Vec::new();
    let mut audit = Vec::new();
    let mut deltas = Vec::new();
    for &scenario in &cfg.scenarios {
        for &config in &cfg.configs {
            let gseed = group_seed(cfg, scenario, config);
            let pools: Vec<SyntheticDataset> = if cfg.regenerate_pool {
                (0..cfg.repeats)
                    .map(|r| build_dataset(&pool_spec(cfg, scenario, config, Some(r))))
                    .collect::<Result<_>>()?
            } else {
                vec![build_dataset(&pool_spec(cfg, scenario, config, None))?]
            };
            let pool_deltas: Vec<f64> = pools
                .iter()
                .map(|p| delta_for(cfg, p))
                .collect::<Result<_>>()?;
            for (i, (p, d)) in pools.iter().zip(&pool_deltas).enumerate() {
                deltas.push(DeltaEntry {
                    scenario,
                    config,
                    repeat_pool: cfg.regenerate_pool.then_some(i),
                    horizon: p.horizon,
                    delta: *d,
                });
            }
            log::info!("{scenario}/{config}: pool ready, {} repeats", cfg.repeats);
            let out: Vec<(Vec<CellRecord>, SplitAudit)> = (0..cfg.repeats)
                .into_par_iter()
                .map(|r| {
                    let pi = if cfg.regenerate_pool { r } else { 0 };
                    let pool = &pools[pi];
                    let (train, val, test) = split_indices(pool.len(), cfg, gseed, r);
                    let key = DatasetKey {
                        scenario: scenario.to_string(),
                        config: config.to_string(),
                        repeat: r,
                    };
                    let job = SplitJob {
                        key,
                        pool,
                        train,
                        val,
                        test,
                        delta: pool_deltas[pi],
                        seed: derive_seed(gseed, r as u64),
                    };
                    let (cells, a) = run_split(cfg, &job);
                    let fam = family_rows(&cells);
                    log::info!(
                        "{}: {} of {} cells ok",
                        job.key,
                        a.cells_checked,
                        cells.len()
                    );
                    (cells.into_iter().chain(fam).collect(), a)
                })
                .collect();
            for (rows, a) in out {
                records.extend(rows);
                audit.push(a);
            }
        }
    }
    Ok(assemble(cfg, records, audit, deltas))
}
