//! Random forest of CART trees: bootstrap sampling per tree, Gini-impurity
//! splits over a random feature subset per node, exact threshold search over
//! midpoints between sorted values.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed::stream_rng;

use super::{FeatureSubsample, PredictError, RfConfig, TrainError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        count0: u32,
        count1: u32,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn leaf_probability(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { count0, count1 } => {
                    return f64::from(*count1) / f64::from(count0 + count1);
                }
                Node::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    /// Set when training saw only one class; the model is a constant
    /// predictor for that label.
    pub single_class: Option<u8>,
}

impl RandomForestModel {
    /// Mean of the per-tree leaf class-1 frequencies; label 1 iff the mean
    /// probability is at least one half.
    pub fn predict(&self, x: &[f64]) -> Result<(u8, f64), PredictError> {
        if x.len() != self.n_features {
            return Err(PredictError::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        if let Some(label) = self.single_class {
            return Ok((label, f64::from(label)));
        }
        let sum: f64 = self.trees.iter().map(|t| t.leaf_probability(x)).sum();
        let prob = sum / self.trees.len() as f64;
        Ok((u8::from(prob >= 0.5), prob))
    }
}

/// Trains `cfg.n_trees` CART trees on bootstrap samples. Each tree draws its
/// random stream from `(seed, tree index)`, so the forest is reproducible
/// and independent of build order.
pub fn train(
    x: &[Vec<f64>],
    y: &[u8],
    cfg: &RfConfig,
    seed: u64,
) -> Result<RandomForestModel, TrainError> {
    let n = check_matrix(x, y)?;
    let d = x[0].len();

    if let Some(label) = single_class_label(y) {
        return Ok(RandomForestModel {
            trees: vec![],
            n_features: d,
            single_class: Some(label),
        });
    }

    let subset_size = match cfg.feature_subsample {
        FeatureSubsample::Sqrt => (d as f64).sqrt().ceil() as usize,
        FeatureSubsample::All => d,
    };

    let mut trees = Vec::with_capacity(cfg.n_trees);
    for t in 0..cfg.n_trees {
        let mut rng = stream_rng(seed, "rf-tree", t as u64);
        let sample: Vec<usize> = if cfg.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let mut builder = TreeBuilder {
            x,
            y,
            cfg,
            subset_size,
            rng: &mut rng,
            nodes: Vec::new(),
        };
        builder.grow(sample, 0);
        trees.push(Tree { nodes: builder.nodes });
    }

    Ok(RandomForestModel { trees, n_features: d, single_class: None })
}

pub(super) fn check_matrix(x: &[Vec<f64>], y: &[u8]) -> Result<usize, TrainError> {
    if x.is_empty() || y.is_empty() {
        return Err(TrainError::EmptyTraining);
    }
    if x.len() != y.len() {
        return Err(TrainError::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    let d = x[0].len();
    for row in x {
        if row.len() != d {
            return Err(TrainError::DimensionMismatch { expected: d, got: row.len() });
        }
    }
    Ok(x.len())
}

pub(super) fn single_class_label(y: &[u8]) -> Option<u8> {
    let first = y[0];
    y.iter().all(|&l| l == first).then_some(first)
}

struct TreeBuilder<'a, R: Rng> {
    x: &'a [Vec<f64>],
    y: &'a [u8],
    cfg: &'a RfConfig,
    subset_size: usize,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

impl<R: Rng> TreeBuilder<'_, R> {
    /// Grows the subtree over `indices`, returning its node id.
    fn grow(&mut self, indices: Vec<usize>, depth: usize) -> usize {
        let (count0, count1) = class_counts(self.y, &indices);
        let pure = count0 == 0 || count1 == 0;
        if pure || depth >= self.cfg.max_depth || indices.len() < 2 * self.cfg.min_leaf {
            return self.push_leaf(count0, count1);
        }
        let Some((feature, threshold)) = self.best_split(&indices) else {
            return self.push_leaf(count0, count1);
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
            .into_iter()
            .partition(|&i| self.x[i][feature] <= threshold);

        let id = self.nodes.len();
        self.nodes.push(Node::Split { feature, threshold, left: 0, right: 0 });
        let left = self.grow(left_idx, depth + 1);
        let right = self.grow(right_idx, depth + 1);
        if let Node::Split { left: l, right: r, .. } = &mut self.nodes[id] {
            *l = left;
            *r = right;
        }
        id
    }

    fn push_leaf(&mut self, count0: u32, count1: u32) -> usize {
        self.nodes.push(Node::Leaf { count0, count1 });
        self.nodes.len() - 1
    }

    /// Minimizes weighted child Gini impurity over a freshly sampled feature
    /// subset; first strict improvement wins, which keeps results seeded.
    fn best_split(&mut self, indices: &[usize]) -> Option<(usize, f64)> {
        let d = self.x[0].len();
        let features = sample_without_replacement(self.rng, d, self.subset_size);
        let n = indices.len() as f64;
        let mut best: Option<(usize, f64, f64)> = None;

        let mut sorted: Vec<(f64, u8)> = Vec::with_capacity(indices.len());
        for &feature in &features {
            sorted.clear();
            sorted.extend(indices.iter().map(|&i| (self.x[i][feature], self.y[i])));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

            let total1 = sorted.iter().filter(|(_, l)| *l == 1).count() as f64;
            let mut left_n = 0.0;
            let mut left_1 = 0.0;
            for w in 0..sorted.len() - 1 {
                left_n += 1.0;
                if sorted[w].1 == 1 {
                    left_1 += 1.0;
                }
                if sorted[w].0 == sorted[w + 1].0 {
                    continue;
                }
                let right_n = n - left_n;
                if (left_n as usize) < self.cfg.min_leaf
                    || (right_n as usize) < self.cfg.min_leaf
                {
                    continue;
                }
                let score =
                    (left_n * gini(left_1, left_n) + right_n * gini(total1 - left_1, right_n)) / n;
                if best.map_or(true, |(_, _, s)| score < s) {
                    let mut threshold = 0.5 * (sorted[w].0 + sorted[w + 1].0);
                    // Midpoints of adjacent floats can round up to the right
                    // value; fall back to the left value so both children
                    // stay non-empty.
                    if threshold >= sorted[w + 1].0 {
                        threshold = sorted[w].0;
                    }
                    best = Some((feature, threshold, score));
                }
            }
        }
        best.map(|(f, t, _)| (f, t))
    }
}

fn class_counts(y: &[u8], indices: &[usize]) -> (u32, u32) {
    let ones = indices.iter().filter(|&&i| y[i] == 1).count() as u32;
    (indices.len() as u32 - ones, ones)
}

fn gini(ones: f64, n: f64) -> f64 {
    let p1 = ones / n;
    let p0 = 1.0 - p1;
    1.0 - p0 * p0 - p1 * p1
}

/// First `k` entries of a seeded Fisher-Yates pass over `0..d`.
fn sample_without_replacement<R: Rng>(rng: &mut R, d: usize, k: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..d).collect();
    let k = k.min(d);
    for i in 0..k {
        let j = rng.random_range(i..d);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}
