//! Coordinate-overlap and residual-bias diagnostics.
//!
//! Overlap reports compare the top-`m` forest-importance coordinates of
//! several attributes (entanglement) or of one attribute across datasets
//! (drift). Residual-bias matrices retrain linear probes for every attribute
//! after every debiasing transform.

use rayon::prelude::*;
use serde::Serialize;

use crate::debias::{ApplyOptions, DebiasArtifact};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::models::{fit_forest_with, top_m_dimensions, train_probe, ForestConfig, LabelVector};
use crate::rng;

fn intersection(a: &[usize], b: &[usize]) -> Vec<usize> {
    let set: std::collections::BTreeSet<usize> = a.iter().copied().collect();
    let mut out: Vec<usize> = b.iter().copied().filter(|i| set.contains(i)).collect();
    out.sort_unstable();
    out.dedup();
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Overlap {
    /// `(i, j, |S_i ∩ S_j|)` for every pair `i < j`.
    pub pairwise: Vec<(usize, usize, usize)>,
    /// `|S_0 ∩ S_1 ∩ S_2|` when three sets are given.
    pub joint: Option<usize>,
}

/// Intersection sizes of two or three index sets.
pub fn overlap(sets: &[&[usize]]) -> Result<Overlap> {
    if !(2..=3).contains(&sets.len()) {
        return Err(Error::InvalidArgument(format!("overlap takes 2 or 3 sets, got {}", sets.len())));
    }
    let mut pairwise = Vec::new();
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            pairwise.push((i, j, intersection(sets[i], sets[j]).len()));
        }
    }
    let joint = (sets.len() == 3).then(|| intersection(&intersection(sets[0], sets[1]), sets[2]).len());
    Ok(Overlap { pairwise, joint })
}

/// Expected intersection of two uniformly random subsets of sizes `m1` and
/// `m2` drawn from `dim` coordinates: `m1·m2/dim`.
pub fn expected_random_overlap(m1: usize, m2: usize, dim: usize) -> Result<f64> {
    if dim == 0 || m1 > dim || m2 > dim {
        return Err(Error::DOutOfRange { m1, m2, dim });
    }
    Ok(m1 as f64 * m2 as f64 / dim as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OverlapReport {
    pub names: Vec<String>,
    pub top_dims: Vec<Vec<usize>>,
    pub overlap: Overlap,
    pub m: usize,
    pub dim: usize,
    pub expected_random_overlap: f64,
}

fn top_dims_for(x: &Matrix, y: &LabelVector, m: usize, forest: &ForestConfig) -> Result<Vec<usize>> {
    let model = fit_forest_with(x, y, forest)?;
    top_m_dimensions(&model.feature_importances, m)
}

fn report(names: Vec<String>, top_dims: Vec<Vec<usize>>, m: usize, dim: usize) -> Result<OverlapReport> {
    let refs: Vec<&[usize]> = top_dims.iter().map(Vec::as_slice).collect();
    let overlap = overlap(&refs)?;
    Ok(OverlapReport {
        names,
        top_dims,
        overlap,
        m,
        dim,
        expected_random_overlap: expected_random_overlap(m, m, dim)?,
    })
}

/// Top-`m` coordinates of every attribute on the same embeddings, and their
/// overlaps. Attribute `k` uses forest seed `derive_seed(forest.seed, k)`.
pub fn entanglement_report(
    x: &Matrix,
    labels: &[(String, LabelVector)],
    m: usize,
    forest: &ForestConfig,
) -> Result<OverlapReport> {
    if labels.len() < 2 {
        return Err(Error::InvalidArgument("entanglement needs at least 2 attributes".into()));
    }
    let mut top_dims = Vec::with_capacity(labels.len());
    for (k, (_, y)) in labels.iter().enumerate() {
        let cfg = ForestConfig {
            seed: rng::derive_seed(forest.seed, k as u64),
            ..forest.clone()
        };
        top_dims.push(top_dims_for(x, y, m, &cfg)?);
    }
    let names = labels.iter().map(|(n, _)| n.clone()).collect();
    report(names, top_dims, m, x.cols())
}

/// One attribute's top-`m` coordinates in each of several datasets, trained
/// with the same forest settings, and their overlaps.
pub fn drift_report(
    datasets: &[(String, &Matrix, &LabelVector)],
    m: usize,
    forest: &ForestConfig,
) -> Result<OverlapReport> {
    if datasets.len() < 2 {
        return Err(Error::InvalidArgument("drift needs at least 2 datasets".into()));
    }
    let dim = datasets[0].1.cols();
    let mut top_dims = Vec::with_capacity(datasets.len());
    for (_, x, y) in datasets {
        if x.cols() != dim {
            return Err(Error::dims(dim, x.cols()));
        }
        top_dims.push(top_dims_for(x, y, m, forest)?);
    }
    let names = datasets.iter().map(|(n, _, _)| n.clone()).collect();
    report(names, top_dims, m, dim)
}

/// A column of a residual-bias matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum DebiasMethod {
    Identity,
    Transform(DebiasArtifact, ApplyOptions),
}

impl DebiasMethod {
    fn apply(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            DebiasMethod::Identity => Ok(x.clone()),
            DebiasMethod::Transform(a, opts) => a.apply(x, *opts),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualBiasMatrix {
    pub attributes: Vec<String>,
    /// `"origin"` first, then one column per method.
    pub columns: Vec<String>,
    /// `accuracy[attribute][column]`, probe test accuracy.
    pub accuracy: Vec<Vec<f64>>,
    /// `1/C` per attribute.
    pub random_baseline: Vec<f64>,
}

impl ResidualBiasMatrix {
    pub fn get(&self, attribute: &str, column: &str) -> Option<f64> {
        let i = self.attributes.iter().position(|a| a == attribute)?;
        let j = self.columns.iter().position(|c| c == column)?;
        Some(self.accuracy[i][j])
    }
}

/// Probes every attribute on the raw embeddings and after every method. All
/// cells share `probe_seed` and `test_frac`, so they use the same split.
pub fn residual_bias_report(
    x: &Matrix,
    labels: &[(String, LabelVector)],
    methods: &[(String, DebiasMethod)],
    probe_seed: u64,
    test_frac: f64,
) -> Result<ResidualBiasMatrix> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("attributes"));
    }
    for (_, m) in methods {
        if let DebiasMethod::Transform(a, _) = m {
            if a.dim_ambient() != x.cols() {
                return Err(Error::dims(x.cols(), a.dim_ambient()));
            }
        }
    }
    let mut transformed = vec![x.clone()];
    for (_, m) in methods {
        transformed.push(m.apply(x)?);
    }
    let cells: Vec<(usize, usize)> = (0..labels.len())
        .flat_map(|i| (0..transformed.len()).map(move |j| (i, j)))
        .collect();
    let values = cells
        .par_iter()
        .map(|&(i, j)| Ok(train_probe(&transformed[j], &labels[i].1, probe_seed, test_frac)?.test_acc))
        .collect::<Result<Vec<f64>>>()?;
    let cols = transformed.len();
    let accuracy = values.chunks(cols).map(<[f64]>::to_vec).collect();
    let mut columns = vec!["origin".to_string()];
    columns.extend(methods.iter().map(|(n, _)| n.clone()));
    Ok(ResidualBiasMatrix {
        attributes: labels.iter().map(|(n, _)| n.clone()).collect(),
        columns,
        accuracy,
        random_baseline: labels.iter().map(|(_, y)| 1.0 / y.class_count() as f64).collect(),
    })
}
