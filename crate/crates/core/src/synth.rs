//! Synthetic embeddings with planted, known bias structure.
//!
//! Each row is isotropic Gaussian noise plus, for every attribute, the class
//! offset of that row's sampled label lifted through the attribute's bias
//! basis. An attribute may also carry class-independent spread along its own
//! latent axes (`latent_sigma`); anisotropic spread inside the bias subspace
//! is what makes a binary attribute need several linear directions before it
//! becomes unpredictable, because the optimal linear classifier then no longer
//! points along the class-mean difference.
//!
//! Row `i` is drawn from its own stream seeded by `derive_seed(seed, i)`.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dot, stack_and_reorthonormalize, Matrix, OrthonormalBasis};
use crate::models::LabelVector;
use crate::rng::{self, derive_seed};

#[derive(Clone, Debug, PartialEq)]
pub struct AttributeSpec {
    pub name: String,
    pub class_count: usize,
    /// `k × D`, orthonormal rows.
    pub bias_basis: OrthonormalBasis,
    /// `C` points in `R^k`.
    pub class_offsets: Vec<Vec<f64>>,
    pub label_proportions: Vec<f64>,
    /// Per latent axis standard deviation, independent of the label.
    pub latent_sigma: Vec<f64>,
}

impl AttributeSpec {
    /// Balanced binary attribute with offsets `±separation/2` along the first
    /// latent axis and no latent spread.
    pub fn binary(name: &str, basis: OrthonormalBasis, separation: f64) -> Self {
        let k = basis.rank();
        let mut hi = vec![0.0; k];
        hi[0] = separation / 2.0;
        let lo = hi.iter().map(|v| -v).collect();
        Self {
            name: name.to_string(),
            class_count: 2,
            bias_basis: basis,
            class_offsets: vec![lo, hi],
            label_proportions: vec![0.5, 0.5],
            latent_sigma: vec![0.0; k],
        }
    }

    /// Balanced binary attribute spread over every latent axis. Axis `j` has
    /// total within-class standard deviation `axis_scales[j] · noise_sigma`
    /// (isotropic noise plus latent spread) and class means
    /// `±separation/2` in those units, so each axis alone separates the
    /// classes by `separation` standard deviations. Unequal scales make the
    /// attribute need one linear direction per axis.
    pub fn binary_spread(
        name: &str,
        basis: OrthonormalBasis,
        separation: f64,
        axis_scales: &[f64],
        noise_sigma: f64,
    ) -> Result<Self> {
        let k = basis.rank();
        if axis_scales.len() != k {
            return Err(Error::SpecInvalid(format!("{} axis scales for a rank-{k} basis", axis_scales.len())));
        }
        if let Some(s) = axis_scales.iter().find(|&&s| !(s >= 1.0 && s.is_finite())) {
            return Err(Error::SpecInvalid(format!("axis scale {s} must be finite and >= 1")));
        }
        let hi: Vec<f64> = axis_scales.iter().map(|s| separation / 2.0 * s * noise_sigma).collect();
        let lo = hi.iter().map(|v| -v).collect();
        Ok(Self {
            name: name.to_string(),
            class_count: 2,
            bias_basis: basis,
            class_offsets: vec![lo, hi],
            label_proportions: vec![0.5, 0.5],
            latent_sigma: axis_scales.iter().map(|s| noise_sigma * (s * s - 1.0).sqrt()).collect(),
        })
    }

    pub fn rank(&self) -> usize {
        self.bias_basis.rank()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantSpec {
    pub n: usize,
    pub d: usize,
    pub attributes: Vec<AttributeSpec>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl PlantSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::SpecInvalid(m));
        if self.n == 0 || self.d == 0 {
            return bad("N and D must be positive".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be finite and >= 0, got {}", self.noise_sigma));
        }
        let total_k: usize = self.attributes.iter().map(AttributeSpec::rank).sum();
        if total_k > self.d {
            return bad(format!("sum of attribute ranks {total_k} exceeds D = {}", self.d));
        }
        for a in &self.attributes {
            let k = a.rank();
            if a.bias_basis.dim_ambient() != self.d {
                return bad(format!("attribute {:?}: basis ambient dim != D", a.name));
            }
            if k == 0 {
                return bad(format!("attribute {:?}: empty bias basis", a.name));
            }
            if a.class_count < 2 || a.class_offsets.len() != a.class_count {
                return bad(format!("attribute {:?}: need C >= 2 offsets, one per class", a.name));
            }
            if a.class_offsets.iter().any(|o| o.len() != k || o.iter().any(|v| !v.is_finite())) {
                return bad(format!("attribute {:?}: every offset must have {k} finite entries", a.name));
            }
            for (i, oi) in a.class_offsets.iter().enumerate() {
                if a.class_offsets[..i].iter().any(|oj| oj == oi) {
                    return bad(format!("attribute {:?}: class offsets must be distinct", a.name));
                }
            }
            if a.label_proportions.len() != a.class_count
                || a.label_proportions.iter().any(|&p| !(p > 0.0))
                || (a.label_proportions.iter().sum::<f64>() - 1.0).abs() > 1e-9
            {
                return bad(format!("attribute {:?}: proportions must be positive and sum to 1", a.name));
            }
            if a.latent_sigma.len() != k || a.latent_sigma.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
                return bad(format!("attribute {:?}: latent_sigma needs {k} finite entries >= 0", a.name));
            }
        }
        Ok(())
    }

    /// True when every pair of attribute bases is mutually orthogonal.
    pub fn attributes_orthogonal(&self) -> bool {
        for (i, a) in self.attributes.iter().enumerate() {
            for b in &self.attributes[i + 1..] {
                for u in a.bias_basis.iter_rows() {
                    for v in b.bias_basis.iter_rows() {
                        if dot(u, v).abs() > 1e-9 {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthDataset {
    pub x: Matrix,
    /// One label vector per attribute, in spec order.
    pub labels: Vec<(String, LabelVector)>,
    pub ground_truth: PlantSpec,
}

impl SynthDataset {
    pub fn labels_for(&self, name: &str) -> Option<&LabelVector> {
        self.labels.iter().find(|(n, _)| n == name).map(|(_, l)| l)
    }
}

fn sample_class(r: &mut rng::Rng, proportions: &[f64]) -> usize {
    let u: f64 = r.random();
    let mut acc = 0.0;
    for (k, p) in proportions.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    proportions.len() - 1
}

pub fn generate(spec: &PlantSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let (n, d) = (spec.n, spec.d);
    let rows: Vec<(Vec<f64>, Vec<usize>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::seeded(derive_seed(spec.seed, i as u64));
            let mut x: Vec<f64> = (0..d)
                .map(|_| spec.noise_sigma * r.sample::<f64, _>(StandardNormal))
                .collect();
            let mut labels = Vec::with_capacity(spec.attributes.len());
            for a in &spec.attributes {
                let c = sample_class(&mut r, &a.label_proportions);
                labels.push(c);
                let coords: Vec<f64> = a.class_offsets[c]
                    .iter()
                    .zip(&a.latent_sigma)
                    .map(|(o, s)| o + s * r.sample::<f64, _>(StandardNormal))
                    .collect();
                for (xi, v) in x.iter_mut().zip(a.bias_basis.lift(&coords)) {
                    *xi += v;
                }
            }
            (x, labels)
        })
        .collect();

    let mut data = Vec::with_capacity(n * d);
    let mut per_attr: Vec<Vec<usize>> = vec![Vec::with_capacity(n); spec.attributes.len()];
    for (x, labels) in rows {
        data.extend(x);
        for (col, l) in per_attr.iter_mut().zip(labels) {
            col.push(l);
        }
    }
    let labels = spec
        .attributes
        .iter()
        .zip(per_attr)
        .map(|(a, l)| Ok((a.name.clone(), LabelVector::new(l, a.class_count)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthDataset {
        x: Matrix::new(n, d, data)?,
        labels,
        ground_truth: spec.clone(),
    })
}

/// Coordinate axes `e_j` for the given indices.
pub fn axis_basis(d: usize, axes: &[usize]) -> Result<OrthonormalBasis> {
    let mut data = vec![0.0; axes.len() * d];
    for (k, &j) in axes.iter().enumerate() {
        if j >= d {
            return Err(Error::SpecInvalid(format!("axis {j} out of range for D = {d}")));
        }
        data[k * d + j] = 1.0;
    }
    OrthonormalBasis::from_orthonormal_rows(Matrix::new(axes.len(), d, data)?, 1e-12)
        .map_err(|_| Error::SpecInvalid("duplicate axes".into()))
}

/// Random `k`-dimensional orthonormal basis, orthogonal to `avoid` when given.
pub fn random_basis(d: usize, k: usize, seed: u64, avoid: Option<&OrthonormalBasis>) -> Result<OrthonormalBasis> {
    let used = avoid.map_or(0, OrthonormalBasis::rank);
    if k == 0 || used + k > d {
        return Err(Error::SpecInvalid(format!("cannot fit {k} new directions next to {used} in D = {d}")));
    }
    let mut r = rng::seeded(seed);
    let draws = Matrix::new(k, d, (0..k * d).map(|_| r.sample(StandardNormal)).collect())?;
    let unit: Vec<f64> = draws
        .iter_rows()
        .flat_map(|row| {
            let n = crate::linalg::norm(row);
            row.iter().map(move |v| v / n)
        })
        .collect();
    let raw = OrthonormalBasis::from_orthonormal_rows(Matrix::new(k, d, unit)?, f64::INFINITY)?;
    let mut parts = Vec::new();
    if let Some(a) = avoid {
        parts.push(a.clone());
    }
    parts.push(raw);
    let stacked = stack_and_reorthonormalize(&parts, 1e-8)?;
    if stacked.rank() != used + k {
        return Err(Error::SpecInvalid("random basis degenerated".into()));
    }
    let tail: Vec<f64> = stacked.as_matrix().as_slice()[used * d..].to_vec();
    OrthonormalBasis::from_orthonormal_rows(Matrix::new(k, d, tail)?, 1e-9)
}

/// Binary attribute `"bias"` whose single planted direction has equal-magnitude
/// loading (random signs) on `support_size` randomly chosen coordinates. Each
/// class mean sits at `±per_coordinate_loading` on every support coordinate.
pub fn generate_distributed_bias(
    n: usize,
    d: usize,
    support_size: usize,
    per_coordinate_loading: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<SynthDataset> {
    if support_size == 0 || support_size > d {
        return Err(Error::SpecInvalid(format!("support_size {support_size} outside 1..={d}")));
    }
    let mut r = rng::seeded(derive_seed(seed, u64::MAX));
    let support = index::sample(&mut r, d, support_size).into_vec();
    let scale = (support_size as f64).sqrt().recip();
    let mut u = vec![0.0; d];
    for &j in &support {
        u[j] = if r.random::<bool>() { scale } else { -scale };
    }
    let basis = OrthonormalBasis::from_orthonormal_rows(Matrix::new(1, d, u)?, 1e-9)?;
    let separation = 2.0 * per_coordinate_loading * (support_size as f64).sqrt();
    generate(&PlantSpec {
        n,
        d,
        attributes: vec![AttributeSpec::binary("bias", basis, separation)],
        noise_sigma,
        seed,
    })
}
