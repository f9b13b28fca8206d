use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::check_inputs;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_split: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_split: 2,
            min_leaf: 1,
            seed: 0,
        }
    }
}

/// Features tried at each split: `ceil(sqrt(d))`.
pub(crate) fn mtry(d: usize) -> usize {
    ((d as f64).sqrt().ceil() as usize).clamp(1, d.max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf(v) => return v,
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

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], k: usize) -> usize {
            match nodes[k] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf(_)))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
    pub params: ForestParams,
    pub feature_subsample: f64,
}

impl ForestModel {
    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let rows: Vec<f64> = (0..x.nrows())
            .into_par_iter()
            .map(|i| self.predict_row(x.row(i)))
            .collect();
        Array1::from(rows)
    }
}

struct Grower<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [f64],
    params: &'a ForestParams,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Grower<'_> {
    fn leaf(&mut self, rows: &[usize]) -> usize {
        let mean = rows.iter().map(|&i| self.y[i]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(Node::Leaf(mean));
        self.nodes.len() - 1
    }

    fn grow(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let n = rows.len();
        let stop = n < self.params.min_split
            || n < 2 * self.params.min_leaf
            || self.params.max_depth.is_some_and(|m| depth >= m);
        if stop {
            return self.leaf(rows);
        }
        let Some(best) = self.best_split(rows) else {
            return self.leaf(rows);
        };
        let (x, f, thr) = (self.x, best.feature, best.threshold);
        let cut = partition(rows, |&i| x[[i, f]] <= thr);
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf(0.0));
        let (l, r) = rows.split_at_mut(cut);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[slot] = Node::Split {
            feature: f,
            threshold: thr,
            left,
            right,
        };
        slot
    }

    fn best_split(&mut self, rows: &[usize]) -> Option<BestSplit> {
        let d = self.x.ncols();
        let features = sample(&mut self.rng, d, self.mtry).into_vec();
        let n = rows.len();
        let min_leaf = self.params.min_leaf.max(1);
        let total: f64 = rows.iter().map(|&i| self.y[i]).sum();
        let parent = total * total / n as f64;
        let mut best: Option<BestSplit> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
        for f in features {
            pairs.clear();
            pairs.extend(rows.iter().map(|&i| (self.x[[i, f]], self.y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += pairs[k].1;
                let n_left = k + 1;
                if pairs[k].0 == pairs[k + 1].0 || n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let right_sum = total - left_sum;
                // reduction in sum of squared errors
                let gain = left_sum * left_sum / n_left as f64
                    + right_sum * right_sum / (n - n_left) as f64
                    - parent;
                if gain > 1e-12 * parent.abs().max(1.0)
                    && best.as_ref().is_none_or(|b| gain > b.gain)
                {
                    best = Some(BestSplit {
                        feature: f,
                        threshold: 0.5 * (pairs[k].0 + pairs[k + 1].0),
                        gain,
                    });
                }
            }
        }
        best
    }
}

/// Stable in-place partition; returns the number of rows satisfying `pred`.
fn partition(rows: &mut [usize], pred: impl Fn(&usize) -> bool) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = rows.iter().partition(|i| pred(i));
    let cut = yes.len();
    rows[..cut].copy_from_slice(&yes);
    rows[cut..].copy_from_slice(&no);
    cut
}

fn grow_tree(x: ArrayView2<f64>, y: &[f64], params: &ForestParams, tree: usize) -> RegressionTree {
    let n = y.len();
    let mut boot = stream(params.seed, tree as u64, Purpose::Bootstrap);
    let mut rows: Vec<usize> = (0..n).map(|_| boot.random_range(0..n)).collect();
    let mut grower = Grower {
        x,
        y,
        params,
        mtry: mtry(x.ncols()),
        rng: stream(params.seed, tree as u64, Purpose::Features),
        nodes: Vec::new(),
    };
    grower.grow(&mut rows, 0);
    RegressionTree {
        nodes: grower.nodes,
    }
}

pub fn fit_random_forest(
    x: ArrayView2<f64>,
    y: &[f64],
    params: ForestParams,
) -> Result<ForestModel> {
    check_inputs(x, y)?;
    if params.n_trees == 0 {
        return Err(Error::InvalidArgument(
            "forest needs at least one tree".into(),
        ));
    }
    if y.len() < params.min_split {
        return Err(Error::InvalidArgument(format!(
            "forest needs n >= min_split ({} < {})",
            y.len(),
            params.min_split
        )));
    }
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| grow_tree(x, y, &params, t))
        .collect();
    Ok(ForestModel {
        trees,
        params,
        feature_subsample: mtry(x.ncols()) as f64 / x.ncols() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn uniform(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = stream(seed, 0, Purpose::Covariates);
        Array2::from_shape_fn((n, d), |_| rng.random())
    }

    #[test]
    fn constant_target_gives_constant_predictions() {
        let x = uniform(50, 3, 1);
        let y = vec![2.5; 50];
        let f = fit_random_forest(
            x.view(),
            &y,
            ForestParams {
                n_trees: 10,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(f.predict(x.view()).iter().all(|&p| p == 2.5));
        assert!(f.trees.iter().all(|t| t.n_leaves() == 1));
    }

    #[test]
    fn one_split_fits_a_step() {
        let x = uniform(200, 1, 2);
        let y: Vec<f64> = x
            .column(0)
            .iter()
            .map(|&v| f64::from(u8::from(v > 0.5)))
            .collect();
        let params = ForestParams {
            n_trees: 1,
            max_depth: Some(1),
            ..Default::default()
        };
        let f = fit_random_forest(x.view(), &y, params).unwrap();
        let pred = f.predict(x.view());
        let mse = pred
            .iter()
            .zip(&y)
            .map(|(p, t)| (p - t).powi(2))
            .sum::<f64>()
            / 200.0;
        assert!(mse < 0.01, "mse {mse}");
        assert_eq!(f.trees[0].depth(), 1);
    }

    #[test]
    fn deterministic_in_seed() {
        let x = uniform(120, 4, 3);
        let y: Vec<f64> = x
            .rows()
            .into_iter()
            .map(|r| r[0] * 2.0 + r[1].sin())
            .collect();
        let p = ForestParams {
            n_trees: 20,
            seed: 9,
            ..Default::default()
        };
        let a = fit_random_forest(x.view(), &y, p)
            .unwrap()
            .predict(x.view());
        let b = fit_random_forest(x.view(), &y, p)
            .unwrap()
            .predict(x.view());
        assert_eq!(a, b);
        let c = fit_random_forest(x.view(), &y, ForestParams { seed: 10, ..p })
            .unwrap()
            .predict(x.view());
        assert_ne!(a, c);
    }

    #[test]
    fn leaves_respect_min_leaf_and_predictions_stay_in_range() {
        let x = uniform(150, 5, 4);
        let y: Vec<f64> = x.rows().into_iter().map(|r| r[2] - r[3] * r[3]).collect();
        let params = ForestParams {
            n_trees: 15,
            max_depth: Some(5),
            min_split: 10,
            min_leaf: 5,
            seed: 1,
        };
        let f = fit_random_forest(x.view(), &y, params).unwrap();
        let (lo, hi) = y
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        let probe = uniform(300, 5, 8);
        assert!(f.predict(probe.view()).iter().all(|&p| p >= lo && p <= hi));
        assert!(f.trees.iter().all(|t| t.depth() <= 5));
        // leaf counts: every leaf came from a node with >= min_leaf bootstrap rows
        for tree in &f.trees {
            assert!(tree.n_leaves() <= 150 / 5);
        }
    }

    #[test]
    fn rejects_too_few_rows() {
        let x = uniform(3, 2, 5);
        let params = ForestParams {
            min_split: 5,
            ..Default::default()
        };
        assert!(fit_random_forest(x.view(), &[1.0, 2.0, 3.0], params).is_err());
    }

    #[test]
    fn mtry_is_ceil_sqrt() {
        assert_eq!(mtry(1), 1);
        assert_eq!(mtry(5), 3);
        assert_eq!(mtry(9), 3);
        assert_eq!(mtry(11), 4);
    }
}
