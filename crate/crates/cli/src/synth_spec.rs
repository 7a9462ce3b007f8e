//! TOML description of a synthetic dataset.
//!
//! ```toml
//! n = 2000
//! d = 64
//! noise_sigma = 1.0
//! seed = 11
//!
//! [[attribute]]
//! name = "a"
//! separation = 3.0
//!
//! [[attribute]]
//! name = "b"
//! rank = 2
//! share = { from = "a", directions = 1 }
//! class_offsets = [[-2.0, -0.5], [2.0, 0.5]]
//!
//! [[attribute]]
//! name = "c"
//! rank = 3
//! separation = 3.0
//! axis_scales = [1.0, 1.4, 2.0]
//! ```
//!
//! Bases are random and orthogonal to every earlier attribute unless `axes`
//! pins them to coordinates or `share` reuses leading directions of an earlier
//! attribute. Signal comes either from `separation` (binary, optionally with
//! `axis_scales`) or from explicit `class_offsets`.
//!
//! A `[distributed]` table replaces the attribute list with the single
//! `"bias"` attribute of the distributed-loading generator.

use serde::Deserialize;
use spd_core::linalg::{stack_and_reorthonormalize, Matrix, OrthonormalBasis, DEFAULT_RANK_TOL};
use spd_core::rng::derive_seed;
use spd_core::synth::{axis_basis, generate, generate_distributed_bias, random_basis, AttributeSpec, PlantSpec, SynthDataset};

use crate::error::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    #[serde(default = "one")]
    pub noise_sigma: f64,
    pub seed: Option<u64>,
    #[serde(default)]
    pub attribute: Vec<SynthAttribute>,
    pub distributed: Option<Distributed>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Distributed {
    pub support_size: usize,
    pub loading: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Share {
    pub from: String,
    pub directions: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthAttribute {
    pub name: String,
    #[serde(default = "rank_one")]
    pub rank: usize,
    pub axes: Option<Vec<usize>>,
    pub share: Option<Share>,
    pub separation: Option<f64>,
    pub axis_scales: Option<Vec<f64>>,
    pub class_offsets: Option<Vec<Vec<f64>>>,
    pub latent_sigma: Option<Vec<f64>>,
    pub label_proportions: Option<Vec<f64>>,
}

fn rank_one() -> usize {
    1
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Core(spd_core::Error::SpecInvalid(msg.into()))
}

fn basis_for(
    attr: &SynthAttribute,
    index: usize,
    d: usize,
    seed: u64,
    earlier: &[(String, OrthonormalBasis)],
) -> Result<OrthonormalBasis, CliError> {
    if let Some(axes) = &attr.axes {
        if axes.len() != attr.rank {
            return Err(invalid(format!("{}: {} axes for rank {}", attr.name, axes.len(), attr.rank)));
        }
        return Ok(axis_basis(d, axes)?);
    }
    let used = if earlier.is_empty() {
        None
    } else {
        let all: Vec<OrthonormalBasis> = earlier.iter().map(|(_, b)| b.clone()).collect();
        Some(stack_and_reorthonormalize(&all, DEFAULT_RANK_TOL)?)
    };
    let stream = derive_seed(seed, 1_000 + index as u64);
    let Some(share) = &attr.share else {
        return Ok(random_basis(d, attr.rank, stream, used.as_ref())?);
    };
    let source = earlier
        .iter()
        .find(|(n, _)| *n == share.from)
        .map(|(_, b)| b)
        .ok_or_else(|| invalid(format!("{}: shares from unknown or later attribute {:?}", attr.name, share.from)))?;
    if share.directions == 0 || share.directions > source.rank().min(attr.rank) {
        return Err(invalid(format!("{}: cannot share {} directions", attr.name, share.directions)));
    }
    let mut rows = source.truncated(share.directions).as_matrix().as_slice().to_vec();
    let fresh = attr.rank - share.directions;
    if fresh > 0 {
        let extra = random_basis(d, fresh, stream, used.as_ref())?;
        rows.extend_from_slice(extra.as_matrix().as_slice());
    }
    Ok(OrthonormalBasis::from_orthonormal_rows(Matrix::new(attr.rank, d, rows)?, 1e-9)?)
}

fn attribute_spec(attr: &SynthAttribute, basis: OrthonormalBasis, noise: f64) -> Result<AttributeSpec, CliError> {
    let mut spec = match (&attr.separation, &attr.class_offsets) {
        (Some(sep), None) => {
            let scales = attr.axis_scales.clone().unwrap_or_else(|| vec![1.0; attr.rank]);
            AttributeSpec::binary_spread(&attr.name, basis, *sep, &scales, noise)?
        }
        (None, Some(offsets)) => {
            if attr.axis_scales.is_some() {
                return Err(invalid(format!("{}: axis_scales needs separation", attr.name)));
            }
            let c = offsets.len();
            AttributeSpec {
                name: attr.name.clone(),
                class_count: c,
                bias_basis: basis,
                class_offsets: offsets.clone(),
                label_proportions: vec![1.0 / c as f64; c],
                latent_sigma: vec![0.0; attr.rank],
            }
        }
        _ => return Err(invalid(format!("{}: give exactly one of separation or class_offsets", attr.name))),
    };
    if let Some(p) = &attr.label_proportions {
        spec.label_proportions = p.clone();
    }
    if let Some(s) = &attr.latent_sigma {
        spec.latent_sigma = s.clone();
    }
    Ok(spec)
}

impl SynthSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("synth spec: {}", e.message())))
    }

    pub fn build(&self, seed: u64) -> Result<SynthDataset, CliError> {
        if let Some(dist) = &self.distributed {
            if !self.attribute.is_empty() {
                return Err(invalid("use either [distributed] or [[attribute]], not both"));
            }
            return Ok(generate_distributed_bias(self.n, self.d, dist.support_size, dist.loading, self.noise_sigma, seed)?);
        }
        if self.attribute.is_empty() {
            return Err(invalid("no attributes"));
        }
        let mut bases: Vec<(String, OrthonormalBasis)> = Vec::new();
        let mut attrs = Vec::new();
        for (i, a) in self.attribute.iter().enumerate() {
            if bases.iter().any(|(n, _)| *n == a.name) {
                return Err(invalid(format!("duplicate attribute {:?}", a.name)));
            }
            if a.rank == 0 || a.rank > self.d {
                return Err(invalid(format!("{}: rank {} outside 1..={}", a.name, a.rank, self.d)));
            }
            let basis = basis_for(a, i, self.d, seed, &bases)?;
            bases.push((a.name.clone(), basis.clone()));
            attrs.push(attribute_spec(a, basis, self.noise_sigma)?);
        }
        Ok(generate(&PlantSpec {
            n: self.n,
            d: self.d,
            attributes: attrs,
            noise_sigma: self.noise_sigma,
            seed,
        })?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use spd_core::linalg::dot;

    #[test]
    fn shared_and_orthogonal_bases() {
        let spec = SynthSpec::parse(
            r#"
            n = 50
            d = 12
            [[attribute]]
            name = "a"
            rank = 3
            separation = 3.0
            axis_scales = [1.0, 1.4, 2.0]
            [[attribute]]
            name = "b"
            rank = 2
            share = { from = "a", directions = 1 }
            class_offsets = [[-2.0, -0.5], [2.0, 0.5]]
            [[attribute]]
            name = "c"
            separation = 4.0
            "#,
        )
        .unwrap();
        let ds = spec.build(3).unwrap();
        let [a, b, c] = &ds.ground_truth.attributes[..] else { panic!() };
        assert_eq!(a.bias_basis.row(0), b.bias_basis.row(0));
        assert!(dot(a.bias_basis.row(1), b.bias_basis.row(1)).abs() < 1e-9);
        for u in a.bias_basis.iter_rows().chain(b.bias_basis.iter_rows()) {
            assert!(dot(u, c.bias_basis.row(0)).abs() < 1e-9);
        }
        assert_eq!(ds.x.rows(), 50);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(SynthSpec::parse("n = 5\nd = 3\nbogus = 1").is_err());
        let s = SynthSpec::parse("n = 5\nd = 3\n[[attribute]]\nname = \"a\"").unwrap();
        assert!(s.build(1).is_err());
        let s = SynthSpec::parse("n = 5\nd = 3\n[[attribute]]\nname = \"a\"\nseparation = 1.0\nshare = { from = \"z\", directions = 1 }").unwrap();
        assert!(s.build(1).is_err());
    }
}
