//! Random forest of axis-aligned Gini trees.
//!
//! Each tree is grown on a bootstrap resample with `max_features` candidate
//! coordinates drawn per split. Feature importance is the total weighted Gini
//! decrease per coordinate, normalized within each tree, averaged over trees
//! and renormalized to sum to one. Tree `t` draws from its own stream seeded
//! by `derive_seed(seed, t)`, so results are identical whether trees are
//! grown serially or in parallel.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use super::labels::LabelVector;
use super::logistic::argmax;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{self, derive_seed};

#[derive(Clone, Debug, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Candidate features per split; `None` means `⌊√D⌋` (at least one).
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 16,
            min_samples_leaf: 2,
            max_features: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        probs: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf_probs(&self, x: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { probs } => return probs,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestModel {
    trees: Vec<Tree>,
    pub feature_importances: Vec<f64>,
    pub n_classes: usize,
    pub n_features: usize,
    /// Out-of-bag accuracy over samples left out by at least one tree.
    pub oob_accuracy: Option<f64>,
    pub seed: u64,
}

impl ForestModel {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Mean leaf class distribution across trees.
    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_classes];
        for t in &self.trees {
            for (a, p) in acc.iter_mut().zip(t.leaf_probs(x)) {
                *a += p;
            }
        }
        let n = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.predict_proba(x))
    }

    fn check_dim(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.n_features {
            return Err(Error::dims(self.n_features, x.cols()));
        }
        Ok(())
    }

    pub fn accuracy(&self, x: &Matrix, y: &LabelVector) -> Result<f64> {
        self.check_dim(x)?;
        if x.rows() != y.len() {
            return Err(Error::dims(x.rows(), y.len()));
        }
        let correct = x
            .iter_rows()
            .zip(y.as_slice())
            .filter(|(r, &l)| self.predict(r) == l)
            .count();
        Ok(correct as f64 / x.rows().max(1) as f64)
    }
}

/// Forest with default hyperparameters except tree count and seed.
pub fn fit_forest(x: &Matrix, y: &LabelVector, n_trees: usize, seed: u64) -> Result<ForestModel> {
    fit_forest_with(
        x,
        y,
        &ForestConfig {
            n_trees,
            seed,
            ..ForestConfig::default()
        },
    )
}

pub fn fit_forest_with(x: &Matrix, y: &LabelVector, cfg: &ForestConfig) -> Result<ForestModel> {
    if x.rows() != y.len() {
        return Err(Error::dims(x.rows(), y.len()));
    }
    if x.rows() < 2 {
        return Err(Error::DegenerateLabels("need at least 2 samples".into()));
    }
    if x.cols() == 0 {
        return Err(Error::EmptyMatrix);
    }
    y.require_all_present(1)?;
    if cfg.n_trees == 0 {
        return Err(Error::InvalidArgument("n_trees must be >= 1".into()));
    }
    let (n, d, c) = (x.rows(), x.cols(), y.class_count());
    let max_features = cfg
        .max_features
        .unwrap_or_else(|| (d as f64).sqrt().floor() as usize)
        .clamp(1, d);
    let params = GrowParams {
        max_depth: cfg.max_depth,
        min_leaf: cfg.min_samples_leaf.max(1),
        max_features,
        classes: c,
    };

    let grown: Vec<(Tree, Vec<f64>, Vec<bool>)> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::seeded(derive_seed(cfg.seed, t as u64));
            let mut in_bag = vec![false; n];
            let sample: Vec<usize> = if cfg.bootstrap {
                (0..n)
                    .map(|_| {
                        let i = r.random_range(0..n);
                        in_bag[i] = true;
                        i
                    })
                    .collect()
            } else {
                in_bag.iter_mut().for_each(|b| *b = true);
                (0..n).collect()
            };
            let mut builder = TreeBuilder {
                x,
                y: y.as_slice(),
                params: &params,
                rng: r,
                nodes: Vec::new(),
                importance: vec![0.0; d],
            };
            builder.grow(sample, 0);
            let total: f64 = builder.importance.iter().sum();
            let mut imp = builder.importance;
            if total > 0.0 {
                imp.iter_mut().for_each(|v| *v /= total);
            }
            (Tree { nodes: builder.nodes }, imp, in_bag)
        })
        .collect();

    let mut importances = vec![0.0; d];
    for (_, imp, _) in &grown {
        for (a, v) in importances.iter_mut().zip(imp) {
            *a += v;
        }
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        importances.iter_mut().for_each(|v| *v /= total);
    } else {
        importances.iter_mut().for_each(|v| *v = 1.0 / d as f64);
    }

    let mut oob_correct = 0usize;
    let mut oob_seen = 0usize;
    for i in 0..n {
        let mut acc = vec![0.0; c];
        let mut any = false;
        for (tree, _, in_bag) in &grown {
            if !in_bag[i] {
                any = true;
                for (a, p) in acc.iter_mut().zip(tree.leaf_probs(x.row(i))) {
                    *a += p;
                }
            }
        }
        if any {
            oob_seen += 1;
            oob_correct += usize::from(argmax(&acc) == y.get(i));
        }
    }

    Ok(ForestModel {
        trees: grown.into_iter().map(|(t, _, _)| t).collect(),
        feature_importances: importances,
        n_classes: c,
        n_features: d,
        oob_accuracy: (oob_seen > 0).then(|| oob_correct as f64 / oob_seen as f64),
        seed: cfg.seed,
    })
}

/// Per-sample confidence: the largest mean leaf class probability.
pub fn forest_confidence(model: &ForestModel, x: &Matrix) -> Result<Vec<f64>> {
    model.check_dim(x)?;
    Ok(x
        .iter_rows()
        .map(|row| {
            model
                .predict_proba(row)
                .into_iter()
                .fold(0.0f64, f64::max)
        })
        .collect())
}

/// Indices of the `m` largest importances (ties toward the lower index),
/// returned in ascending index order.
pub fn top_m_dimensions(importances: &[f64], m: usize) -> Result<Vec<usize>> {
    let d = importances.len();
    if m == 0 || m > d {
        return Err(Error::MOutOfRange { m, dim: d });
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        importances[b]
            .partial_cmp(&importances[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut top = order[..m].to_vec();
    top.sort_unstable();
    Ok(top)
}

struct GrowParams {
    max_depth: usize,
    min_leaf: usize,
    max_features: usize,
    classes: usize,
}

struct TreeBuilder<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    params: &'a GrowParams,
    rng: rng::Rng,
    nodes: Vec<Node>,
    importance: Vec<f64>,
}

fn gini_weighted(counts: &[usize], n: usize) -> f64 {
    // n · gini = n − Σ c² / n
    if n == 0 {
        return 0.0;
    }
    let sq: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
    n as f64 - sq / n as f64
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

impl TreeBuilder<'_> {
    fn leaf(&mut self, counts: &[usize], n: usize) -> usize {
        let probs = counts.iter().map(|&c| c as f64 / n as f64).collect();
        self.nodes.push(Node::Leaf { probs });
        self.nodes.len() - 1
    }

    fn grow(&mut self, samples: Vec<usize>, depth: usize) -> usize {
        let n = samples.len();
        let mut counts = vec![0usize; self.params.classes];
        for &i in &samples {
            counts[self.y[i]] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.params.max_depth || n < 2 * self.params.min_leaf {
            return self.leaf(&counts, n);
        }
        let Some(best) = self.best_split(&samples, &counts) else {
            return self.leaf(&counts, n);
        };
        self.importance[best.feature] += best.decrease / self.x.rows() as f64;

        let (left, right): (Vec<usize>, Vec<usize>) = samples
            .into_iter()
            .partition(|&i| self.x.get(i, best.feature) <= best.threshold);
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { probs: Vec::new() });
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[at] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: r,
        };
        at
    }

    fn best_split(&mut self, samples: &[usize], counts: &[usize]) -> Option<BestSplit> {
        let n = samples.len();
        let d = self.x.cols();
        let parent = gini_weighted(counts, n);
        let min_leaf = self.params.min_leaf;
        let mut features = index::sample(&mut self.rng, d, self.params.max_features).into_vec();
        features.sort_unstable();

        let mut best: Option<BestSplit> = None;
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n);
        for f in features {
            pairs.clear();
            pairs.extend(samples.iter().map(|&i| (self.x.get(i, f), self.y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut left = vec![0usize; counts.len()];
            let mut right = counts.to_vec();
            for k in 0..n - 1 {
                let lbl = pairs[k].1;
                left[lbl] += 1;
                right[lbl] -= 1;
                let nl = k + 1;
                if nl < min_leaf || n - nl < min_leaf || pairs[k].0 == pairs[k + 1].0 {
                    continue;
                }
                let decrease = parent - gini_weighted(&left, nl) - gini_weighted(&right, n - nl);
                if decrease > 1e-12 && best.as_ref().is_none_or(|b| decrease > b.decrease) {
                    let mut threshold = 0.5 * (pairs[k].0 + pairs[k + 1].0);
                    if threshold >= pairs[k + 1].0 {
                        threshold = pairs[k].0;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        decrease,
                    });
                }
            }
        }
        best
    }
}
