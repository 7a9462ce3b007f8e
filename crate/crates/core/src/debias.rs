//! The two debiasing transforms and the neutral-mean estimate they share.
//!
//! SPD removes the bias subspace `U` from every embedding,
//! `x' = x (I − UᵀU)`, and optionally re-adds the component of a neutral
//! reference point along that subspace, `x'' = x' + Uᵀ(U x̄_low)`. Every output
//! then has the same coordinates `U x̄_low` inside the subspace, so the
//! reinjection carries no per-sample attribute signal.
//!
//! SFID is the coordinate-wise baseline: the `m` coordinates a random forest
//! finds most important are overwritten with their neutral means.
//!
//! The neutral point `x̄_low` is the mean of low-confidence samples under a
//! random forest trained for the attribute. Two selection rules exist: a
//! confidence threshold (`conf < τ`) and a rank rule (the `⌈τN⌉` least
//! confident samples). The threshold rule is the default; when it selects
//! nothing, [`estimate_neutral_mean_or_fallback`] switches to the rank rule.
//!
//! Joint debiasing of several attributes is sequential application of
//! per-attribute artifacts and depends on the order.

use crate::error::{Error, Result};
use crate::inlp::{identify_bias_subspace, BiasSubspaceArtifact, InlpConfig};
use crate::linalg::{remove_components, Matrix};
use crate::models::{fit_forest_with, forest_confidence, top_m_dimensions, ForestConfig, LabelVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionMode {
    Threshold,
    BottomPercent,
}

impl SelectionMode {
    pub fn as_u8(self) -> u8 {
        match self {
            SelectionMode::Threshold => 0,
            SelectionMode::BottomPercent => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(SelectionMode::Threshold),
            1 => Some(SelectionMode::BottomPercent),
            _ => None,
        }
    }
}

impl std::str::FromStr for SelectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold" => Ok(SelectionMode::Threshold),
            "bottom_percent" | "bottom-percent" => Ok(SelectionMode::BottomPercent),
            other => Err(Error::InvalidArgument(format!("unknown selection mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SelectionMode::Threshold => "threshold",
            SelectionMode::BottomPercent => "bottom_percent",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeutralMean {
    pub vector: Vec<f64>,
    /// The rule that actually produced `vector` (after any fallback).
    pub selection_mode: SelectionMode,
    pub tau: f64,
    pub n_selected: usize,
    pub attribute_name: String,
}

fn select_low_confidence(confidences: &[f64], mode: SelectionMode, tau: f64) -> Vec<usize> {
    match mode {
        SelectionMode::Threshold => (0..confidences.len()).filter(|&i| confidences[i] < tau).collect(),
        SelectionMode::BottomPercent => {
            let n = confidences.len();
            // tolerance keeps 0.3 × 10 from rounding up to 4
            let k = ((tau * n as f64) - 1e-9).ceil().max(0.0) as usize;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| confidences[a].total_cmp(&confidences[b]).then(a.cmp(&b)));
            let mut picked = order[..k.min(n)].to_vec();
            picked.sort_unstable();
            picked
        }
    }
}

/// Mean of the low-confidence rows of `x`.
pub fn estimate_neutral_mean(
    x: &Matrix,
    confidences: &[f64],
    mode: SelectionMode,
    tau: f64,
    attribute_name: &str,
) -> Result<NeutralMean> {
    if confidences.len() != x.rows() {
        return Err(Error::dims(x.rows(), confidences.len()));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidArgument(format!("tau must lie in (0, 1), got {tau}")));
    }
    if let Some(bad) = confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(Error::InvalidArgument(format!("confidence {bad} outside [0, 1]")));
    }
    let picked = select_low_confidence(confidences, mode, tau);
    if picked.is_empty() {
        return Err(Error::EmptySelection { tau });
    }
    Ok(NeutralMean {
        vector: x.mean_of_rows(&picked),
        selection_mode: mode,
        tau,
        n_selected: picked.len(),
        attribute_name: attribute_name.to_string(),
    })
}

/// As [`estimate_neutral_mean`], but an empty threshold selection falls back
/// to the rank rule with the same `τ` (logged as a warning).
pub fn estimate_neutral_mean_or_fallback(
    x: &Matrix,
    confidences: &[f64],
    mode: SelectionMode,
    tau: f64,
    attribute_name: &str,
) -> Result<NeutralMean> {
    match estimate_neutral_mean(x, confidences, mode, tau, attribute_name) {
        Err(Error::EmptySelection { .. }) if mode == SelectionMode::Threshold => {
            log::warn!(
                "{attribute_name}: no sample has confidence below {tau}; using the {tau} least confident fraction instead"
            );
            estimate_neutral_mean(x, confidences, SelectionMode::BottomPercent, tau, attribute_name)
        }
        other => other,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpdArtifact {
    pub subspace: BiasSubspaceArtifact,
    pub neutral: NeutralMean,
    pub reinjection_enabled: bool,
}

impl SpdArtifact {
    pub fn new(subspace: BiasSubspaceArtifact, neutral: NeutralMean, reinjection_enabled: bool) -> Result<Self> {
        if subspace.dim_ambient() != neutral.vector.len() {
            return Err(Error::dims(subspace.dim_ambient(), neutral.vector.len()));
        }
        Ok(Self {
            subspace,
            neutral,
            reinjection_enabled,
        })
    }

    pub fn dim_ambient(&self) -> usize {
        self.subspace.dim_ambient()
    }

    /// `Uᵀ(U x̄_low)`, the vector added to every projected row.
    pub fn reinjection_vector(&self) -> Vec<f64> {
        let basis = &self.subspace.basis;
        basis.lift(&basis.coordinates(&self.neutral.vector))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ApplyOptions {
    /// Rescale every output row to unit L2 norm.
    pub renormalize: bool,
    /// Skip the reinjection step regardless of the artifact's setting.
    pub proj_only: bool,
}

pub fn spd_apply(x: &Matrix, artifact: &SpdArtifact) -> Result<Matrix> {
    spd_apply_with(x, artifact, ApplyOptions::default())
}

pub fn spd_apply_with(x: &Matrix, artifact: &SpdArtifact, opts: ApplyOptions) -> Result<Matrix> {
    let d = artifact.dim_ambient();
    if x.cols() != d {
        return Err(Error::dims(d, x.cols()));
    }
    let basis = &artifact.subspace.basis;
    let mut out = x.clone();
    if !basis.is_empty() {
        let reinject = (artifact.reinjection_enabled && !opts.proj_only).then(|| artifact.reinjection_vector());
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            remove_components(row, basis);
            if let Some(r) = &reinject {
                for (v, a) in row.iter_mut().zip(r) {
                    *v += a;
                }
            }
        }
    }
    if opts.renormalize {
        out.normalize_rows();
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpdConfig {
    pub inlp: InlpConfig,
    pub forest: ForestConfig,
    pub mode: SelectionMode,
    pub tau: f64,
    pub reinjection: bool,
}

impl Default for SpdConfig {
    fn default() -> Self {
        Self {
            inlp: InlpConfig {
                target_directions: 5,
                ..InlpConfig::default()
            },
            forest: ForestConfig::default(),
            mode: SelectionMode::Threshold,
            tau: 0.7,
            reinjection: true,
        }
    }
}

/// Learns the bias subspace and the neutral mean from the same pool.
pub fn fit_spd(x: &Matrix, y: &LabelVector, attribute_name: &str, cfg: &SpdConfig) -> Result<SpdArtifact> {
    fit_spd_with_pool(x, y, x, attribute_name, cfg)
}

/// The subspace and the confidence forest are fitted on `(x, y)`; the neutral
/// mean is estimated from `pool`.
pub fn fit_spd_with_pool(
    x: &Matrix,
    y: &LabelVector,
    pool: &Matrix,
    attribute_name: &str,
    cfg: &SpdConfig,
) -> Result<SpdArtifact> {
    if pool.cols() != x.cols() {
        return Err(Error::dims(x.cols(), pool.cols()));
    }
    let subspace = identify_bias_subspace(x, y, attribute_name, &cfg.inlp)?;
    let forest = fit_forest_with(x, y, &cfg.forest)?;
    let conf = forest_confidence(&forest, pool)?;
    let neutral = estimate_neutral_mean_or_fallback(pool, &conf, cfg.mode, cfg.tau, attribute_name)?;
    SpdArtifact::new(subspace, neutral, cfg.reinjection)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SfidArtifact {
    pub attribute_name: String,
    pub dim_ambient: usize,
    /// Replaced coordinates, ascending.
    pub dims: Vec<usize>,
    pub neutral_values: Vec<f64>,
    pub tau: f64,
    pub selection_mode: SelectionMode,
    pub n_selected: usize,
}

impl SfidArtifact {
    pub fn new(attribute_name: &str, dim_ambient: usize, dims: Vec<usize>, neutral_values: Vec<f64>, tau: f64) -> Result<Self> {
        if dims.len() != neutral_values.len() {
            return Err(Error::dims(dims.len(), neutral_values.len()));
        }
        if dims.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("SFID dimensions must be sorted and unique".into()));
        }
        if let Some(&bad) = dims.iter().find(|&&j| j >= dim_ambient) {
            return Err(Error::dims(dim_ambient, bad));
        }
        Ok(Self {
            attribute_name: attribute_name.to_string(),
            dim_ambient,
            dims,
            neutral_values,
            tau,
            selection_mode: SelectionMode::Threshold,
            n_selected: 0,
        })
    }

    pub fn m(&self) -> usize {
        self.dims.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SfidConfig {
    pub m: usize,
    pub tau: f64,
    pub mode: SelectionMode,
    pub forest: ForestConfig,
}

impl Default for SfidConfig {
    fn default() -> Self {
        Self {
            m: 100,
            tau: 0.7,
            mode: SelectionMode::Threshold,
            forest: ForestConfig::default(),
        }
    }
}

/// Forest importance ranking, top-`m` selection and per-coordinate neutral
/// means from the low-confidence samples of `x`.
pub fn sfid_fit(x: &Matrix, y: &LabelVector, attribute_name: &str, cfg: &SfidConfig) -> Result<SfidArtifact> {
    let d = x.cols();
    if cfg.m == 0 || cfg.m > d {
        return Err(Error::MOutOfRange { m: cfg.m, dim: d });
    }
    let forest = fit_forest_with(x, y, &cfg.forest)?;
    let dims = top_m_dimensions(&forest.feature_importances, cfg.m)?;
    let conf = forest_confidence(&forest, x)?;
    let neutral = estimate_neutral_mean_or_fallback(x, &conf, cfg.mode, cfg.tau, attribute_name)?;
    let values = dims.iter().map(|&j| neutral.vector[j]).collect();
    let mut art = SfidArtifact::new(attribute_name, d, dims, values, cfg.tau)?;
    art.selection_mode = neutral.selection_mode;
    art.n_selected = neutral.n_selected;
    Ok(art)
}

pub fn sfid_apply(x: &Matrix, artifact: &SfidArtifact) -> Result<Matrix> {
    if x.cols() != artifact.dim_ambient {
        return Err(Error::dims(artifact.dim_ambient, x.cols()));
    }
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        for (&j, &v) in artifact.dims.iter().zip(&artifact.neutral_values) {
            row[j] = v;
        }
    }
    Ok(out)
}

/// Either kind of fitted per-attribute transform.
#[derive(Clone, Debug, PartialEq)]
pub enum DebiasArtifact {
    Spd(SpdArtifact),
    Sfid(SfidArtifact),
}

impl DebiasArtifact {
    pub fn attribute_name(&self) -> &str {
        match self {
            DebiasArtifact::Spd(a) => &a.subspace.attribute_name,
            DebiasArtifact::Sfid(a) => &a.attribute_name,
        }
    }

    pub fn dim_ambient(&self) -> usize {
        match self {
            DebiasArtifact::Spd(a) => a.dim_ambient(),
            DebiasArtifact::Sfid(a) => a.dim_ambient,
        }
    }

    pub fn apply(&self, x: &Matrix, opts: ApplyOptions) -> Result<Matrix> {
        match self {
            DebiasArtifact::Spd(a) => spd_apply_with(x, a, opts),
            DebiasArtifact::Sfid(a) => {
                let mut out = sfid_apply(x, a)?;
                if opts.renormalize {
                    out.normalize_rows();
                }
                Ok(out)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inlp::StopReason;
    use crate::linalg::{dot, qr_orthonormal_rows, OrthonormalBasis};
    use crate::rng;
    use rand::Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut r = rng::seeded(seed);
        Matrix::new(rows, cols, (0..rows * cols).map(|_| r.random_range(-2.0..2.0)).collect()).unwrap()
    }

    fn artifact(basis: OrthonormalBasis, neutral: Vec<f64>, reinject: bool) -> SpdArtifact {
        let subspace = BiasSubspaceArtifact {
            basis,
            attribute_name: "g".into(),
            per_iteration_accuracy: vec![0.9, 0.5],
            directions_per_iteration: vec![1],
            class_count: 2,
            stop_reason: StopReason::ChanceReached,
        };
        let neutral = NeutralMean {
            vector: neutral,
            selection_mode: SelectionMode::Threshold,
            tau: 0.7,
            n_selected: 1,
            attribute_name: "g".into(),
        };
        SpdArtifact::new(subspace, neutral, reinject).unwrap()
    }

    #[test]
    fn neutral_mean_examples() {
        let x = random(3, 4, 1);
        let all = estimate_neutral_mean(&x, &[0.5; 3], SelectionMode::Threshold, 0.7, "g").unwrap();
        assert_eq!(all.vector, x.mean_of_rows(&[0, 1, 2]));
        assert_eq!(all.n_selected, 3);

        let b = estimate_neutral_mean(&x, &[0.9, 0.1, 0.9], SelectionMode::Threshold, 0.7, "g").unwrap();
        assert_eq!(b.vector, x.row(1));

        let x = random(10, 3, 2);
        let mut r = rng::seeded(3);
        let conf: Vec<f64> = (0..10).map(|_| r.random::<f64>()).collect();
        let got = estimate_neutral_mean(&x, &conf, SelectionMode::BottomPercent, 0.3, "g").unwrap();
        let mut order: Vec<usize> = (0..10).collect();
        order.sort_by(|&a, &b| conf[a].partial_cmp(&conf[b]).unwrap());
        let oracle: Vec<f64> = (0..3)
            .map(|j| order[..3].iter().map(|&i| x.get(i, j)).sum::<f64>() / 3.0)
            .collect();
        assert_eq!(got.n_selected, 3);
        for (a, b) in got.vector.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_selection_and_fallback() {
        let x = random(4, 2, 1);
        let conf = [0.95, 0.9, 0.99, 0.8];
        assert!(matches!(
            estimate_neutral_mean(&x, &conf, SelectionMode::Threshold, 0.7, "g"),
            Err(Error::EmptySelection { .. })
        ));
        let nm = estimate_neutral_mean_or_fallback(&x, &conf, SelectionMode::Threshold, 0.5, "g").unwrap();
        assert_eq!(nm.selection_mode, SelectionMode::BottomPercent);
        assert_eq!(nm.n_selected, 2);
        assert_eq!(nm.vector, x.mean_of_rows(&[1, 3]));
        assert!(estimate_neutral_mean(&x, &conf, SelectionMode::Threshold, 1.0, "g").is_err());
        assert!(estimate_neutral_mean(&x, &[0.5, 0.5, 0.5, 1.5], SelectionMode::Threshold, 0.7, "g").is_err());
    }

    #[test]
    fn spd_fixed_point_and_identity() {
        let basis = qr_orthonormal_rows(&random(2, 6, 4), 1e-8).unwrap();
        let xbar = random(1, 6, 5).into_vec();
        let art = artifact(basis, xbar.clone(), true);
        let x = Matrix::from_rows(&[xbar.clone()]).unwrap();
        let out = spd_apply(&x, &art).unwrap();
        for (a, b) in out.row(0).iter().zip(&xbar) {
            assert!((a - b).abs() < 1e-12);
        }

        let empty = artifact(OrthonormalBasis::empty(6), xbar, true);
        let x = random(5, 6, 6);
        assert_eq!(spd_apply(&x, &empty).unwrap(), x);
    }

    #[test]
    fn spd_matches_naive_formula_and_constancy() {
        let basis = qr_orthonormal_rows(&random(2, 7, 7), 1e-8).unwrap();
        let xbar = random(1, 7, 8).into_vec();
        let art = artifact(basis.clone(), xbar.clone(), true);
        let x = random(20, 7, 9);
        let out = spd_apply(&x, &art).unwrap();
        for (i, row) in x.iter_rows().enumerate() {
            let mut naive = row.to_vec();
            for u in basis.iter_rows() {
                let a = dot(row, u);
                let b = dot(&xbar, u);
                for j in 0..7 {
                    naive[j] += (b - a) * u[j];
                }
            }
            for j in 0..7 {
                assert!((naive[j] - out.get(i, j)).abs() < 1e-12);
            }
            let c = basis.coordinates(out.row(i));
            let target = basis.coordinates(&xbar);
            for (a, b) in c.iter().zip(&target) {
                assert!((a - b).abs() <= 1e-6);
            }
        }
        let proj = spd_apply_with(&x, &art, ApplyOptions { proj_only: true, renormalize: false }).unwrap();
        for row in proj.iter_rows() {
            assert!(basis.coordinates(row).iter().all(|c| c.abs() <= 1e-6));
        }
        let twice = spd_apply(&out, &art).unwrap();
        for (a, b) in twice.as_slice().iter().zip(out.as_slice()) {
            assert!((a - b).abs() <= 1e-6);
        }
        let unit = spd_apply_with(&x, &art, ApplyOptions { proj_only: false, renormalize: true }).unwrap();
        for row in unit.iter_rows() {
            assert!((crate::linalg::norm(row) - 1.0).abs() < 1e-12);
        }
        assert!(matches!(spd_apply(&random(2, 3, 1), &art), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn sfid_apply_examples() {
        let x = random(4, 5, 2);
        let none = SfidArtifact::new("g", 5, vec![], vec![], 0.7).unwrap();
        assert_eq!(sfid_apply(&x, &none).unwrap(), x);

        let one = SfidArtifact::new("g", 2, vec![0], vec![7.0], 0.7).unwrap();
        let out = sfid_apply(&Matrix::from_rows(&[[1.0, 2.0]]).unwrap(), &one).unwrap();
        assert_eq!(out.row(0), &[7.0, 2.0]);

        let art = SfidArtifact::new("g", 5, vec![1, 3], vec![-0.25, 9.5], 0.7).unwrap();
        let out = sfid_apply(&x, &art).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                let expect = if j == 1 { -0.25 } else if j == 3 { 9.5 } else { x.get(i, j) };
                assert_eq!(out.get(i, j).to_bits(), expect.to_bits());
            }
        }
        assert!(SfidArtifact::new("g", 5, vec![3, 1], vec![0.0, 0.0], 0.7).is_err());
        assert!(SfidArtifact::new("g", 5, vec![5], vec![0.0], 0.7).is_err());
        assert!(matches!(sfid_apply(&random(1, 4, 0), &art), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn sfid_fit_single_informative_dimension() {
        let x = random(300, 8, 10);
        let y = LabelVector::new(x.iter_rows().map(|r| usize::from(r[3] > 0.0)).collect(), 2).unwrap();
        let cfg = SfidConfig {
            m: 1,
            forest: ForestConfig {
                n_trees: 30,
                seed: 1,
                ..ForestConfig::default()
            },
            ..SfidConfig::default()
        };
        let art = sfid_fit(&x, &y, "g", &cfg).unwrap();
        assert_eq!(art.dims, vec![3]);

        let all = sfid_fit(&x, &y, "g", &SfidConfig { m: 8, ..cfg.clone() }).unwrap();
        assert_eq!(all.dims, (0..8).collect::<Vec<_>>());
        let out = sfid_apply(&x, &all).unwrap();
        for row in out.iter_rows() {
            assert_eq!(row, all.neutral_values.as_slice());
        }
        assert!(matches!(sfid_fit(&x, &y, "g", &SfidConfig { m: 9, ..cfg }), Err(Error::MOutOfRange { .. })));
    }
}
