//! Oracles and fixtures shared by the acceptance runner and the property suites.
#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use survhte::baselearn::{fit_lasso, LearnerSpec, Tuning};
use survhte::cate::{fit_imputed_meta, fit_survival_meta, MetaOptions, Variant};
use survhte::datagen::Estimand;
use survhte::impute::{FittedImputer, ImputeMethod, ImputeOptions};
use survhte::metrics::{rank_table, AuxMetrics, DatasetKey, MethodKey, MetricRecord, RankMetric};
use survhte::rng::{stream, Purpose};
use survhte::rsf::RsfParams;
use survhte::survcurve::fit_km;

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}
#[allow(unused_imports)]
pub(crate) use ensure;

/// Random right-censored sample. Times are rounded to a 0.1 grid a third of
/// the time so ties show up.
pub fn survival_sample(n: usize, censor_prob: f64, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = stream(seed, 0, Purpose::Covariates);
    let coarse = rng.random_bool(1.0 / 3.0);
    let times = (0..n)
        .map(|_| {
            let t = -rng.random::<f64>().max(1e-12).ln() * 2.0;
            if coarse {
                (t * 10.0).round() / 10.0
            } else {
                t
            }
        })
        .collect();
    let events = (0..n).map(|_| !rng.random_bool(censor_prob)).collect();
    (times, events)
}

fn surrogates(
    imp: &FittedImputer,
    times: &[f64],
    events: &[bool],
    in_sample: bool,
) -> Vec<(f64, bool)> {
    let ids: Vec<usize> = (0..times.len()).collect();
    let rows = if in_sample {
        imp.impute_in_sample(&ids)
    } else {
        imp.impute(&ids, times, events)
    };
    rows.expect("valid inputs")
        .iter()
        .map(|r| (r.surrogate, r.floored))
        .collect()
}

const OPTION_SETS: [ImputeOptions; 3] = [
    ImputeOptions {
        replace_uncensored: false,
        floor_all: false,
    },
    ImputeOptions {
        replace_uncensored: true,
        floor_all: false,
    },
    ImputeOptions {
        replace_uncensored: true,
        floor_all: true,
    },
];

/// Censored units never get a surrogate below their observed time; with
/// `floor_all` nobody does. Checked in and out of sample for every imputer.
pub fn check_floor(times: &[f64], events: &[bool], query_t: &[f64], query_e: &[bool]) -> Check {
    for method in ImputeMethod::ALL {
        for opts in OPTION_SETS {
            let imp = FittedImputer::fit(method, times, events, opts).map_err(|e| e.to_string())?;
            let cases = [
                (surrogates(&imp, times, events, true), times, events),
                (surrogates(&imp, query_t, query_e, false), query_t, query_e),
            ];
            for (rows, t, e) in cases {
                for (i, &(s, floored)) in rows.iter().enumerate() {
                    let bound = !e[i] || opts.floor_all;
                    ensure!(
                        !bound || s >= t[i],
                        "{method} {opts:?}: unit {i} surrogate {s} < observed {}",
                        t[i]
                    );
                    ensure!(
                        !floored || s == t[i],
                        "{method}: floored unit {i} is not at its observed time"
                    );
                    ensure!(s.is_finite(), "{method}: non-finite surrogate");
                }
            }
        }
    }
    Ok(())
}

/// Brute-force jackknife: refit Kaplan-Meier without (or with) each unit.
pub fn brute_pseudo_in_sample(times: &[f64], events: &[bool]) -> Vec<f64> {
    let n = times.len() as f64;
    let full = fit_km(times, events).unwrap().mean();
    (0..times.len())
        .map(|i| {
            let t: Vec<f64> = times
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, &v)| v)
                .collect();
            let e: Vec<bool> = events
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, &v)| v)
                .collect();
            n * full - (n - 1.0) * fit_km(&t, &e).unwrap().mean()
        })
        .collect()
}

pub fn brute_pseudo_out_of_sample(times: &[f64], events: &[bool], t: f64, e: bool) -> f64 {
    let n = times.len() as f64 + 1.0;
    let base = fit_km(times, events).unwrap().mean();
    let mut tt = times.to_vec();
    let mut ee = events.to_vec();
    tt.push(t);
    ee.push(e);
    n * fit_km(&tt, &ee).unwrap().mean() - (n - 1.0) * base
}

/// The one-pass pseudo-observation path against the refit oracle.
pub fn check_pseudo_fast_path(times: &[f64], events: &[bool], tol: f64) -> Check {
    let opts = ImputeOptions {
        replace_uncensored: true,
        floor_all: false,
    };
    let imp = FittedImputer::fit(ImputeMethod::PseudoObs, times, events, opts)
        .map_err(|e| e.to_string())?;
    let fast = surrogates(&imp, times, events, true);
    let oracle = brute_pseudo_in_sample(times, events);
    for (i, (&(s, _), &raw)) in fast.iter().zip(&oracle).enumerate() {
        let want = if events[i] { raw } else { raw.max(times[i]) };
        ensure!(
            (s - want).abs() <= tol,
            "in-sample unit {i}: fast {s} vs oracle {want}"
        );
    }
    // out of sample: each unit queried against the others
    let k = times.len().min(20);
    for i in 0..k {
        let rest_t: Vec<f64> = times
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, &v)| v)
            .collect();
        let rest_e: Vec<bool> = events
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, &v)| v)
            .collect();
        let imp = FittedImputer::fit(ImputeMethod::PseudoObs, &rest_t, &rest_e, opts)
            .map_err(|e| e.to_string())?;
        let (s, _) = surrogates(&imp, &times[i..=i], &events[i..=i], false)[0];
        let raw = brute_pseudo_out_of_sample(&rest_t, &rest_e, times[i], events[i]);
        let want = if events[i] { raw } else { raw.max(times[i]) };
        ensure!(
            (s - want).abs() <= tol,
            "out-of-sample unit {i}: fast {s} vs oracle {want}"
        );
    }
    Ok(())
}

/// Without censoring every imputer returns the observed times.
pub fn check_no_censoring_collapse(times: &[f64]) -> Check {
    let events = vec![true; times.len()];
    for method in ImputeMethod::ALL {
        for opts in OPTION_SETS {
            let imp =
                FittedImputer::fit(method, times, &events, opts).map_err(|e| e.to_string())?;
            for in_sample in [true, false] {
                for (i, (s, _)) in surrogates(&imp, times, &events, in_sample)
                    .into_iter()
                    .enumerate()
                {
                    let tol = 1e-9 * (1.0 + times[i].abs());
                    ensure!(
                        (s - times[i]).abs() <= tol,
                        "{method} {opts:?} in_sample={in_sample}: unit {i} {s} vs {}",
                        times[i]
                    );
                }
            }
        }
    }
    Ok(())
}

/// Kaplan-Meier without censoring is one minus the empirical CDF.
pub fn check_km_ecdf(times: &[f64]) -> Check {
    let n = times.len() as f64;
    let curve = fit_km(times, &vec![true; times.len()]).map_err(|e| e.to_string())?;
    let mut probes: Vec<f64> = times.to_vec();
    probes.extend(times.iter().map(|t| t * 0.999));
    probes.extend(times.iter().map(|t| t + 1e-3));
    probes.push(0.0);
    for p in probes {
        let ecdf = times.iter().filter(|&&t| t <= p).count() as f64 / n;
        let s = curve.eval(p);
        ensure!(
            (s - (1.0 - ecdf)).abs() <= 1e-12,
            "S({p}) = {s} but 1 - ECDF = {}",
            1.0 - ecdf
        );
    }
    Ok(())
}

pub fn random_design(n: usize, d: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
    let mut rng = stream(seed, 0, Purpose::Covariates);
    let x = Array2::from_shape_fn((n, d), |_| rng.random::<f64>() * 2.0 - 1.0);
    let beta: Vec<f64> = (0..d)
        .map(|j| {
            if j % 2 == 0 {
                rng.random::<f64>() * 4.0 - 2.0
            } else {
                0.0
            }
        })
        .collect();
    let y = (0..n)
        .map(|i| (0..d).map(|j| x[[i, j]] * beta[j]).sum::<f64>() + rng.random::<f64>() - 0.5)
        .collect();
    (x, y)
}

/// Full stationarity residual of the lasso fit on the standardized scale:
/// `|g_j - alpha sign(b_j)|` on the active set and `(|g_j| - alpha)+` elsewhere.
pub fn kkt_residual(x: ArrayView2<f64>, y: &[f64], alpha: f64) -> Result<f64, String> {
    let m = fit_lasso(x, y, alpha).map_err(|e| e.to_string())?;
    let nf = x.nrows() as f64;
    let pred = m.predict(x);
    let resid: Vec<f64> = y.iter().zip(pred.iter()).map(|(t, p)| t - p).collect();
    let b_std = m.standardized_coefficients();
    let mut worst: f64 = 0.0;
    for (col, &bj) in x.columns().into_iter().zip(b_std.iter()) {
        let mean = col.sum() / nf;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf).sqrt();
        if sd <= 1e-12 {
            continue;
        }
        let g = col
            .iter()
            .zip(&resid)
            .map(|(v, r)| (v - mean) / sd * r)
            .sum::<f64>()
            / nf;
        let r = if bj != 0.0 {
            (g - alpha * bj.signum()).abs()
        } else {
            (g.abs() - alpha).max(0.0)
        };
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Uncensored randomized trial with `tau(x) = 1 + x2`.
pub fn linear_rct(n: usize, seed: u64, noise: f64) -> (Array2<f64>, Vec<u8>, Vec<f64>, Vec<f64>) {
    let mut rng = stream(seed, 0, Purpose::Covariates);
    let x = Array2::from_shape_fn((n, 3), |_| rng.random::<f64>());
    let w: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
    let tau: Vec<f64> = (0..n).map(|i| 1.0 + x[[i, 1]]).collect();
    let y = (0..n)
        .map(|i| x[[i, 0]] + f64::from(w[i]) * tau[i] + noise * (rng.random::<f64>() - 0.5))
        .collect();
    (x, w, y, tau)
}

pub fn lasso_tuning() -> Tuning {
    Tuning::Fixed(LearnerSpec::Lasso { alpha: 0.0001 })
}

fn flipped(w: &[u8]) -> Vec<u8> {
    w.iter().map(|&v| 1 - v).collect()
}

fn negation_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p + q).abs())
        .fold(0.0, f64::max)
}

/// Swapping treatment labels negates the estimated effect.
pub fn check_label_symmetry(seed: u64) -> Check {
    let (x, w, y, _) = linear_rct(400, seed, 0.3);
    let wf = flipped(&w);
    let opts = MetaOptions::default();
    for v in [Variant::T, Variant::X, Variant::DR] {
        let fit = |w: &[u8]| -> Result<Vec<f64>, String> {
            let m = fit_imputed_meta(v, x.view(), w, &y, &lasso_tuning(), &opts)
                .map_err(|e| e.to_string())?;
            Ok(m.predict(x.view()).to_vec())
        };
        let gap = negation_gap(&fit(&w)?, &fit(&wf)?);
        ensure!(gap < 1e-6, "{v}: max |tau + tau_flipped| = {gap}");
    }

    let mut rng = stream(seed, 1, Purpose::EventControl);
    let n = 200;
    let times: Vec<f64> = (0..n)
        .map(|i| -rng.random::<f64>().max(1e-12).ln() * (1.0 + x[[i, 0]]))
        .collect();
    let events: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
    let xs = x.slice(ndarray::s![..n, ..]);
    let ws = &w[..n];
    let params = RsfParams {
        n_estimators: 10,
        min_split: 10,
        min_leaf: 5,
        seed,
    };
    for v in [Variant::T, Variant::Matching] {
        let fit = |w: &[u8]| -> Result<Vec<f64>, String> {
            let m = fit_survival_meta(v, xs, w, &times, &events, params, Estimand::Rmst, 2.0, 5)
                .map_err(|e| e.to_string())?;
            Ok(m.predict(xs).to_vec())
        };
        let gap = negation_gap(&fit(ws)?, &fit(&flipped(ws))?);
        ensure!(gap < 1e-12, "survival {v}: max |tau + tau_flipped| = {gap}");
    }
    Ok(())
}

pub fn method(i: usize) -> MethodKey {
    MethodKey {
        family: "imputed_meta".into(),
        variant: format!("M{i}"),
        imputer: String::new(),
        base_learner: "lasso".into(),
    }
}

pub fn dataset(i: usize) -> DatasetKey {
    DatasetKey {
        scenario: "A".into(),
        config: "RCT-50".into(),
        repeat: i,
    }
}

/// A full methods x datasets grid; `values[d][m]` is the CATE RMSE.
pub fn records_from(values: &[Vec<f64>]) -> Vec<MetricRecord> {
    let mut out = Vec::new();
    for (d, row) in values.iter().enumerate() {
        for (m, &v) in row.iter().enumerate() {
            out.push(MetricRecord {
                dataset: dataset(d),
                method: method(m),
                cate_rmse: v,
                ate_bias: -v,
                aux: AuxMetrics::default(),
            });
        }
    }
    out
}

/// Rank-table invariants: tie-averaged ranks, order consistency, Borda as the
/// mean rank, and win rates that never fall as k grows and reach 1 at k = m.
pub fn check_rank_table(values: &[Vec<f64>]) -> Check {
    let m = values[0].len();
    let ks: Vec<usize> = (1..=m).collect();
    let table = rank_table(&records_from(values), RankMetric::CateRmse, &ks, false)
        .map_err(|e| e.to_string())?;
    let col: BTreeMap<MethodKey, usize> = table
        .methods
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, k)| (k, i))
        .collect();
    ensure!(table.methods.len() == m, "expected {m} methods");
    for (di, key) in table.datasets.iter().enumerate() {
        let row = &values[key.repeat];
        let ranks = &table.ranks[di];
        let total: f64 = ranks.iter().sum();
        let want = (m * (m + 1)) as f64 / 2.0;
        ensure!(
            (total - want).abs() < 1e-9,
            "dataset {key}: ranks sum to {total}, want {want}"
        );
        for a in 0..m {
            for b in 0..m {
                let (ra, rb) = (ranks[col[&method(a)]], ranks[col[&method(b)]]);
                if row[a] == row[b] {
                    ensure!(
                        ra == rb,
                        "dataset {key}: tied methods {a},{b} have ranks {ra},{rb}"
                    );
                } else if row[a] < row[b] {
                    ensure!(
                        ra < rb,
                        "dataset {key}: better method {a} ranked {ra} behind {b} at {rb}"
                    );
                }
            }
        }
    }
    let nd = table.datasets.len() as f64;
    for j in 0..m {
        let mean = table.ranks.iter().map(|r| r[j]).sum::<f64>() / nd;
        ensure!(
            (mean - table.borda[j]).abs() < 1e-9,
            "borda {} is not the mean rank {mean}",
            table.borda[j]
        );
        let mut prev = 0.0;
        for k in &ks {
            let r = table.winrate_topk[k][j];
            ensure!((0.0..=1.0).contains(&r), "win rate {r} out of range");
            ensure!(r >= prev, "win rate falls from {prev} to {r} at k={k}");
            prev = r;
        }
        ensure!(prev == 1.0, "top-{m} win rate is {prev}, not 1");
    }
    Ok(())
}

/// Methods x datasets grid drawn from a small value set so ties are common.
pub fn fuzzed_grid(n_datasets: usize, n_methods: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, 0, Purpose::Covariates);
    (0..n_datasets)
        .map(|_| {
            (0..n_methods)
                .map(|_| f64::from(rng.random_range(0..4u8)) * 0.25)
                .collect()
        })
        .collect()
}
