//! Per-dataset error metrics and cross-dataset rank aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_len, Error, Result};
use crate::survcurve::SurvivalCurve;

pub fn cate_rmse(tau_hat: &[f64], tau_true: &[f64]) -> Result<f64> {
    ensure_same_len("tau_hat/tau_true", tau_hat.len(), tau_true.len())?;
    if tau_hat.is_empty() {
        return Err(Error::EmptyRequest("RMSE of an empty vector"));
    }
    let mse = tau_hat
        .iter()
        .zip(tau_true)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / tau_hat.len() as f64;
    Ok(mse.sqrt())
}

pub fn ate_bias(tau_hat: &[f64], delta_true: f64) -> Result<f64> {
    if tau_hat.is_empty() {
        return Err(Error::EmptyRequest("ATE of an empty vector"));
    }
    Ok(tau_hat.iter().sum::<f64>() / tau_hat.len() as f64 - delta_true)
}

pub fn imputation_mae(surrogates: &[f64], true_times: &[f64]) -> Result<f64> {
    ensure_same_len("surrogates/true times", surrogates.len(), true_times.len())?;
    if surrogates.is_empty() {
        return Err(Error::EmptyRequest("MAE of an empty vector"));
    }
    Ok(surrogates
        .iter()
        .zip(true_times)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / surrogates.len() as f64)
}

/// Time-dependent concordance with a caller-supplied survival predictor `surv(i, t)`.
pub fn ctd_index_with(
    times: &[f64],
    events: &[bool],
    surv: impl Fn(usize, f64) -> f64 + Sync,
) -> Result<f64> {
    ensure_same_len("times/events", times.len(), events.len())?;
    let n = times.len();
    let (conc, pairs) = (0..n)
        .into_par_iter()
        .filter(|&i| events[i])
        .map(|i| {
            let ti = times[i];
            let si = surv(i, ti);
            let mut c = 0.0;
            let mut p = 0u64;
            for (j, &tj) in times.iter().enumerate() {
                if tj > ti {
                    p += 1;
                    let sj = surv(j, ti);
                    if si < sj {
                        c += 1.0;
                    } else if si == sj {
                        c += 0.5;
                    }
                }
            }
            (c, p)
        })
        .reduce(|| (0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if pairs == 0 {
        return Err(Error::UndefinedMetric("C-index has no comparable pairs"));
    }
    Ok(conc / pairs as f64)
}

pub fn ctd_index(curves: &[SurvivalCurve], times: &[f64], events: &[bool]) -> Result<f64> {
    ensure_same_len("curves/times", curves.len(), times.len())?;
    ctd_index_with(times, events, |i, t| curves[i].eval(t))
}

/// Average ranks (1 = smallest) with ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut k = 0;
    while k < order.len() {
        let mut end = k + 1;
        while end < order.len() && values[order[end]] == values[order[k]] {
            end += 1;
        }
        let shared = (k + 1 + end) as f64 / 2.0;
        for &i in &order[k..end] {
            ranks[i] = shared;
        }
        k = end;
    }
    ranks
}

/// Mann-Whitney AUC; tied scores contribute one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    ensure_same_len("scores/labels", scores.len(), labels.len())?;
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both classes"));
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1)
        .map(|(r, _)| r)
        .sum();
    let (p, q) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DatasetKey {
    pub scenario: String,
    pub config: String,
    pub repeat: usize,
}

impl fmt::Display for DatasetKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.scenario, self.config, self.repeat)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MethodKey {
    pub family: String,
    pub variant: String,
    /// Empty when the method does not impute.
    pub imputer: String,
    pub base_learner: String,
}

impl fmt::Display for MethodKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.family, self.variant)?;
        if !self.imputer.is_empty() {
            write!(f, ":{}", self.imputer)?;
        }
        if !self.base_learner.is_empty() {
            write!(f, ":{}", self.base_learner)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AuxMetrics {
    pub impute_mae: Option<f64>,
    pub ctd: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub dataset: DatasetKey,
    pub method: MethodKey,
    pub cate_rmse: f64,
    pub ate_bias: f64,
    pub aux: AuxMetrics,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum RankMetric {
    #[default]
    CateRmse,
    AbsAteBias,
}

impl std::str::FromStr for RankMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cate_rmse" => Ok(RankMetric::CateRmse),
            "abs_ate_bias" => Ok(RankMetric::AbsAteBias),
            _ => Err(Error::InvalidArgument(format!("unknown rank metric '{s}'"))),
        }
    }
}

impl RankMetric {
    fn value(&self, r: &MetricRecord) -> f64 {
        match self {
            RankMetric::CateRmse => r.cate_rmse,
            RankMetric::AbsAteBias => r.ate_bias.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub methods: Vec<MethodKey>,
    pub datasets: Vec<DatasetKey>,
    /// `ranks[d][m]`, tie-averaged within dataset `d`.
    pub ranks: Vec<Vec<f64>>,
    pub borda: Vec<f64>,
    pub borda_stderr: Vec<f64>,
    /// `k -> fraction of datasets where method m is in the top k` (ties inclusive).
    pub winrate_topk: BTreeMap<usize, Vec<f64>>,
    /// Datasets left out because some method had no record there.
    pub dropped: Vec<DatasetKey>,
}

impl RankTable {
    /// Method indices sorted by mean rank, best first.
    pub fn order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.methods.len()).collect();
        idx.sort_by(|&a, &b| self.borda[a].total_cmp(&self.borda[b]).then(a.cmp(&b)));
        idx
    }

    pub fn render_borda_csv(&self) -> String {
        let mut out = String::from("method,mean_rank,rank_stderr\n");
        for m in self.order() {
            out.push_str(&format!(
                "{},{:.6},{:.6}\n",
                self.methods[m], self.borda[m], self.borda_stderr[m]
            ));
        }
        out
    }

    pub fn render_borda_markdown(&self) -> String {
        let mut out = String::from("| method | mean rank | rank stderr |\n|---|---:|---:|\n");
        for m in self.order() {
            out.push_str(&format!(
                "| {} | {:.3} | {:.3} |\n",
                self.methods[m], self.borda[m], self.borda_stderr[m]
            ));
        }
        out.push_str(&format!(
            "\nRanks are averaged over {} datasets; tied values share the mean of their positions.\n",
            self.datasets.len()
        ));
        if !self.winrate_topk.is_empty() {
            out.push_str("Top-k counts every method whose value is beaten by fewer than k others, so ties at the boundary are included.\n");
        }
        if !self.dropped.is_empty() {
            out.push_str(&format!(
                "{} incomplete datasets were left out.\n",
                self.dropped.len()
            ));
        }
        out
    }

    pub fn render_winrates_csv(&self) -> String {
        let ks: Vec<usize> = self.winrate_topk.keys().copied().collect();
        let mut out = String::from("method");
        for k in &ks {
            out.push_str(&format!(",top{k}"));
        }
        out.push('\n');
        for m in self.order() {
            out.push_str(&self.methods[m].to_string());
            for k in &ks {
                out.push_str(&format!(",{:.6}", self.winrate_topk[k][m]));
            }
            out.push('\n');
        }
        out
    }
}

/// Build the rank table. With `allow_missing`, incomplete datasets are dropped
/// instead of failing.
pub fn rank_table(
    records: &[MetricRecord],
    metric: RankMetric,
    ks: &[usize],
    allow_missing: bool,
) -> Result<RankTable> {
    if records.is_empty() {
        return Err(Error::EmptyRequest("no metric records to rank"));
    }
    let methods: Vec<MethodKey> = records
        .iter()
        .map(|r| r.method.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let all_datasets: Vec<DatasetKey> = records
        .iter()
        .map(|r| r.dataset.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut cells: BTreeMap<(&DatasetKey, &MethodKey), f64> = BTreeMap::new();
    for r in records {
        let v = metric.value(r);
        if !v.is_finite() {
            return Err(Error::NonFinite("metric record value"));
        }
        if cells.insert((&r.dataset, &r.method), v).is_some() {
            return Err(Error::InvalidArgument(format!(
                "duplicate record for {} / {}",
                r.dataset, r.method
            )));
        }
    }
    let mut missing = Vec::new();
    let mut datasets = Vec::new();
    let mut dropped = Vec::new();
    for d in &all_datasets {
        let gaps: Vec<String> = methods
            .iter()
            .filter(|m| !cells.contains_key(&(d, *m)))
            .map(|m| format!("{d} / {m}"))
            .collect();
        if gaps.is_empty() {
            datasets.push(d.clone());
        } else {
            dropped.push(d.clone());
            missing.extend(gaps);
        }
    }
    if !missing.is_empty() && !allow_missing {
        return Err(Error::MissingCells(missing));
    }
    if datasets.is_empty() {
        return Err(Error::MissingCells(vec![
            "no dataset has a record for every method".into(),
        ]));
    }

    let nm = methods.len();
    let mut ranks = Vec::with_capacity(datasets.len());
    let mut topk: BTreeMap<usize, Vec<f64>> = ks.iter().map(|&k| (k, vec![0.0; nm])).collect();
    for d in &datasets {
        let values: Vec<f64> = methods.iter().map(|m| cells[&(d, m)]).collect();
        for (m, &v) in values.iter().enumerate() {
            let better = values.iter().filter(|&&o| o < v).count();
            for (&k, counts) in topk.iter_mut() {
                if better < k {
                    counts[m] += 1.0;
                }
            }
        }
        ranks.push(average_ranks(&values));
    }
    let nd = datasets.len() as f64;
    for counts in topk.values_mut() {
        counts.iter_mut().for_each(|c| *c /= nd);
    }
    let borda: Vec<f64> = (0..nm)
        .map(|m| ranks.iter().map(|r| r[m]).sum::<f64>() / nd)
        .collect();
    let borda_stderr: Vec<f64> = (0..nm)
        .map(|m| {
            if datasets.len() < 2 {
                return 0.0;
            }
            let var = ranks.iter().map(|r| (r[m] - borda[m]).powi(2)).sum::<f64>() / (nd - 1.0);
            (var / nd).sqrt()
        })
        .collect();
    Ok(RankTable {
        methods,
        datasets,
        ranks,
        borda,
        borda_stderr,
        winrate_topk: topk,
        dropped,
    })
}

pub fn borda_rank(records: &[MetricRecord], metric: RankMetric) -> Result<RankTable> {
    rank_table(records, metric, &[], false)
}

/// `k -> (method, fraction of datasets in the top k)`.
pub fn win_rates(
    records: &[MetricRecord],
    metric: RankMetric,
    ks: &[usize],
) -> Result<BTreeMap<usize, Vec<(MethodKey, f64)>>> {
    let t = rank_table(records, metric, ks, false)?;
    Ok(t.winrate_topk
        .iter()
        .map(|(&k, v)| {
            (
                k,
                t.methods.iter().cloned().zip(v.iter().copied()).collect(),
            )
        })
        .collect())
}
