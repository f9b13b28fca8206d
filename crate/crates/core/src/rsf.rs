//! Random survival forest with log-rank splits and Kaplan-Meier leaves.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselearn::mtry;
use crate::datagen::Estimand;
use crate::error::{ensure_same_len, Error, Result};
use crate::rng::{derive_seed, set_fingerprint, stream, Purpose};
use crate::survcurve::{fit_km, SurvivalCurve};

pub const RSF_ESTIMATORS: [usize; 3] = [100, 250, 500];
pub const RSF_MIN_SPLIT: [usize; 3] = [5, 10, 20];
pub const RSF_MIN_LEAF: [usize; 3] = [2, 5, 10];
/// Candidate thresholds per feature and node.
pub const MAX_THRESHOLDS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RsfParams {
    pub n_estimators: usize,
    pub min_split: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for RsfParams {
    fn default() -> Self {
        RsfParams {
            n_estimators: 100,
            min_split: 10,
            min_leaf: 5,
            seed: 0,
        }
    }
}

/// The full hyperparameter grid, smallest forests and most regularized first.
pub fn rsf_grid(seed: u64) -> Vec<RsfParams> {
    let mut grid = Vec::new();
    for &n_estimators in &RSF_ESTIMATORS {
        for &min_split in RSF_MIN_SPLIT.iter().rev() {
            for &min_leaf in RSF_MIN_LEAF.iter().rev() {
                grid.push(RsfParams {
                    n_estimators,
                    min_split,
                    min_leaf,
                    seed,
                });
            }
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(usize),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalTree {
    nodes: Vec<Node>,
    leaves: Vec<SurvivalCurve>,
}

impl SurvivalTree {
    pub fn leaf(&self, row: ArrayView1<f64>) -> &SurvivalCurve {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf(l) => return &self.leaves[l],
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    k = if row[feature] <= threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsfModel {
    pub trees: Vec<SurvivalTree>,
    pub params: RsfParams,
    /// Sorted distinct training event times.
    pub time_grid: Vec<f64>,
    support_end: f64,
}

impl RsfModel {
    /// Ensemble mean of the leaf curves, as a step curve on `time_grid`.
    pub fn predict_survival_curve(&self, row: ArrayView1<f64>) -> SurvivalCurve {
        let g = self.time_grid.len();
        let mut drops = vec![0.0; g];
        for tree in &self.trees {
            let leaf = tree.leaf(row);
            let mut prev = 1.0;
            for (t, p) in leaf.grid().iter().zip(leaf.probs()) {
                let k = self.time_grid.partition_point(|&s| s < *t);
                drops[k] += prev - p;
                prev = *p;
            }
        }
        let m = self.trees.len() as f64;
        let mut s = 1.0;
        let probs: Vec<f64> = drops
            .iter()
            .map(|d| {
                s -= d / m;
                s.clamp(0.0, 1.0)
            })
            .collect();
        SurvivalCurve::from_parts(self.time_grid.clone(), probs, self.support_end)
    }

    pub fn predict_survival_curves(&self, x: ArrayView2<f64>) -> Vec<SurvivalCurve> {
        (0..x.nrows())
            .into_par_iter()
            .map(|i| self.predict_survival_curve(x.row(i)))
            .collect()
    }

    /// `S(t | x)` as the tree average of leaf values.
    pub fn survival_at(&self, row: ArrayView1<f64>, t: f64) -> f64 {
        self.trees
            .iter()
            .map(|tr| tr.leaf(row).eval(t))
            .sum::<f64>()
            / self.trees.len() as f64
    }

    /// RMST of the ensemble curve, computed as the mean of leaf RMSTs.
    pub fn rmst_row(&self, row: ArrayView1<f64>, horizon: f64) -> f64 {
        self.trees
            .iter()
            .map(|tr| tr.leaf(row).rmst(horizon))
            .sum::<f64>()
            / self.trees.len() as f64
    }

    pub fn predict_rmst(&self, x: ArrayView2<f64>, horizon: f64) -> Array1<f64> {
        let v: Vec<f64> = (0..x.nrows())
            .into_par_iter()
            .map(|i| self.rmst_row(x.row(i), horizon))
            .collect();
        Array1::from(v)
    }

    pub fn predict_functional(
        &self,
        x: ArrayView2<f64>,
        estimand: Estimand,
        horizon: f64,
    ) -> Array1<f64> {
        let v: Vec<f64> = (0..x.nrows())
            .into_par_iter()
            .map(|i| match estimand {
                Estimand::Rmst => self.rmst_row(x.row(i), horizon),
                Estimand::SurvProb => self.survival_at(x.row(i), horizon),
            })
            .collect();
        Array1::from(v)
    }
}

struct Grower<'a> {
    x: ArrayView2<'a, f64>,
    times: &'a [f64],
    events: &'a [bool],
    params: &'a RsfParams,
    mtry: usize,
    tree: u64,
    nodes: Vec<Node>,
    leaves: Vec<SurvivalCurve>,
}

impl Grower<'_> {
    fn leaf(&mut self, rows: &[usize]) -> usize {
        let t: Vec<f64> = rows.iter().map(|&i| self.times[i]).collect();
        let e: Vec<bool> = rows.iter().map(|&i| self.events[i]).collect();
        let curve = fit_km(&t, &e).expect("leaf rows are nonempty with valid times");
        self.leaves.push(curve);
        self.nodes.push(Node::Leaf(self.leaves.len() - 1));
        self.nodes.len() - 1
    }

    /// `rows` arrive sorted by observed time.
    fn grow(&mut self, rows: Vec<usize>) -> usize {
        let n = rows.len();
        let has_event = rows.iter().any(|&i| self.events[i]);
        if !has_event || n < self.params.min_split || n < 2 * self.params.min_leaf.max(1) {
            return self.leaf(&rows);
        }
        let Some((feature, threshold)) = self.best_split(&rows) else {
            return self.leaf(&rows);
        };
        let x = self.x;
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| x[[i, feature]] <= threshold);
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf(usize::MAX));
        let left = self.grow(left_rows);
        let right = self.grow(right_rows);
        self.nodes[slot] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        slot
    }

    fn best_split(&mut self, rows: &[usize]) -> Option<(usize, f64)> {
        // Keyed on the node's row multiset, so the draw does not depend on build order.
        let mut rng = stream(
            derive_seed(self.params.seed, set_fingerprint(rows)),
            self.tree,
            Purpose::Features,
        );
        let features = sample(&mut rng, self.x.ncols(), self.mtry).into_vec();
        let min_leaf = self.params.min_leaf.max(1);
        let groups = TimeGroups::new(rows, self.times, self.events);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut values: Vec<f64> = Vec::with_capacity(rows.len());
        for f in features {
            values.clear();
            values.extend(rows.iter().map(|&i| self.x[[i, f]]));
            for thr in candidate_thresholds(&values) {
                let n_left = values.iter().filter(|&&v| v <= thr).count();
                if n_left < min_leaf || rows.len() - n_left < min_leaf {
                    continue;
                }
                let stat = groups.log_rank(&values, thr, n_left).abs();
                if stat.is_finite() && best.is_none_or(|b| stat > b.0) {
                    best = Some((stat, f, thr));
                }
            }
        }
        best.filter(|b| b.0 > 0.0).map(|b| (b.1, b.2))
    }
}

/// Midpoints between sorted distinct values, thinned to at most `MAX_THRESHOLDS` quantiles.
fn candidate_thresholds(values: &[f64]) -> Vec<f64> {
    let mut u = values.to_vec();
    u.sort_by(f64::total_cmp);
    u.dedup();
    if u.len() < 2 {
        return Vec::new();
    }
    let gaps = u.len() - 1;
    if gaps <= MAX_THRESHOLDS {
        return u.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    let mut out: Vec<f64> = (1..=MAX_THRESHOLDS)
        .map(|k| {
            let pos = (k * gaps / (MAX_THRESHOLDS + 1)).min(gaps - 1);
            0.5 * (u[pos] + u[pos + 1])
        })
        .collect();
    out.dedup();
    out
}

/// Node rows grouped by distinct observed time (rows sorted by time).
pub(crate) struct TimeGroups {
    /// `ends[g]` is one past the last row of group `g`.
    ends: Vec<usize>,
    deaths: Vec<f64>,
    event: Vec<bool>,
}

impl TimeGroups {
    pub(crate) fn new(rows: &[usize], times: &[f64], events: &[bool]) -> Self {
        let mut ends = Vec::new();
        let mut deaths = Vec::new();
        let event: Vec<bool> = rows.iter().map(|&i| events[i]).collect();
        let mut k = 0;
        while k < rows.len() {
            let t = times[rows[k]];
            let mut d = 0.0;
            while k < rows.len() && times[rows[k]] == t {
                d += f64::from(u8::from(event[k]));
                k += 1;
            }
            ends.push(k);
            deaths.push(d);
        }
        TimeGroups {
            ends,
            deaths,
            event,
        }
    }

    /// Standardized two-sample log-rank statistic of left (`value <= thr`) vs right.
    pub(crate) fn log_rank(&self, values: &[f64], thr: f64, n_left: usize) -> f64 {
        let mut at_risk = values.len() as f64;
        let mut at_risk_left = n_left as f64;
        let mut num = 0.0;
        let mut var = 0.0;
        let mut start = 0;
        for (g, &end) in self.ends.iter().enumerate() {
            let d = self.deaths[g];
            let mut leaving_left = 0.0;
            let mut d_left = 0.0;
            for (&v, &ev) in values[start..end].iter().zip(&self.event[start..end]) {
                if v <= thr {
                    leaving_left += 1.0;
                    if ev {
                        d_left += 1.0;
                    }
                }
            }
            if d > 0.0 {
                // Written symmetric in the two groups: swapping them negates `num` exactly.
                let at_risk_right = at_risk - at_risk_left;
                let d_right = d - d_left;
                num += (d_left * at_risk_right - d_right * at_risk_left) / at_risk;
                if at_risk > 1.0 {
                    var += d * (at_risk_left * at_risk_right) / (at_risk * at_risk) * (at_risk - d)
                        / (at_risk - 1.0);
                }
            }
            at_risk -= (end - start) as f64;
            at_risk_left -= leaving_left;
            start = end;
        }
        if var <= 0.0 {
            0.0
        } else {
            num / var.sqrt()
        }
    }
}

fn grow_tree(
    x: ArrayView2<f64>,
    times: &[f64],
    events: &[bool],
    params: &RsfParams,
    tree: usize,
) -> SurvivalTree {
    let n = times.len();
    let mut boot = stream(params.seed, tree as u64, Purpose::Bootstrap);
    let mut rows: Vec<usize> = (0..n).map(|_| boot.random_range(0..n)).collect();
    rows.sort_by(|&a, &b| times[a].total_cmp(&times[b]).then(a.cmp(&b)));
    let mut grower = Grower {
        x,
        times,
        events,
        params,
        mtry: mtry(x.ncols()),
        tree: tree as u64,
        nodes: Vec::new(),
        leaves: Vec::new(),
    };
    grower.grow(rows);
    SurvivalTree {
        nodes: grower.nodes,
        leaves: grower.leaves,
    }
}

pub fn fit_rsf(
    x: ArrayView2<f64>,
    times: &[f64],
    events: &[bool],
    params: RsfParams,
) -> Result<RsfModel> {
    ensure_same_len("X rows/times", x.nrows(), times.len())?;
    ensure_same_len("times/events", times.len(), events.len())?;
    if times.is_empty() {
        return Err(Error::EmptyRequest("survival forest needs training rows"));
    }
    if params.n_estimators == 0 {
        return Err(Error::InvalidArgument(
            "survival forest needs at least one tree".into(),
        ));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("survival forest features"));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::Domain(
            "observed times must be finite and >= 0".into(),
        ));
    }
    if !events.iter().any(|&e| e) {
        return Err(Error::NoEvents);
    }
    if times.len() < params.min_split {
        return Err(Error::InvalidArgument(format!(
            "survival forest needs n >= min_split ({} < {})",
            times.len(),
            params.min_split
        )));
    }
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| grow_tree(x, times, events, &params, t))
        .collect();
    let mut time_grid: Vec<f64> = times
        .iter()
        .zip(events)
        .filter(|(_, &e)| e)
        .map(|(&t, _)| t)
        .collect();
    time_grid.sort_by(f64::total_cmp);
    time_grid.dedup();
    Ok(RsfModel {
        trees,
        params,
        time_grid,
        support_end: times.iter().copied().fold(0.0, f64::max),
    })
}
