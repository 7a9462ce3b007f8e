//! Bias subspace identification by iterative null-space projection.
//!
//! Each round fits a softmax classifier for the attribute on the current
//! embeddings, takes an orthonormal basis of its weight rows, and projects the
//! embeddings onto the orthogonal complement of that basis. Rounds continue
//! until the classifier is no better than `1/C + stop_margin`, the requested
//! number of directions has been collected, or the iteration cap is hit
//! (reported the same way when every dimension has been removed). The
//! per-round bases, in extraction order, form the bias subspace.
//!
//! With a direction target `r`, a round that overshoots it is kept whole and
//! the stacked basis is truncated to its first `r` rows.
//!
//! Softmax logits are invariant to adding the same vector to every weight row,
//! so by default the mean weight row is subtracted before the QR step. A
//! binary attribute then contributes exactly one direction per round instead
//! of one informative direction plus one gauge direction.

use crate::error::{Error, Result};
use crate::linalg::{
    project_onto_complement, qr_orthonormal_rows, stack_and_reorthonormalize, Matrix,
    OrthonormalBasis, DEFAULT_RANK_TOL,
};
use crate::models::{accuracy, fit_logistic, LabelVector, LogisticConfig};

/// L2 strength of the per-round classifier. Strong shrinkage pulls the
/// weights toward the class-mean differences, which keeps noise coordinates
/// out of the extracted directions when `D` is large relative to `N`.
pub const DEFAULT_INLP_L2: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct InlpConfig {
    pub max_iterations: usize,
    /// Number of directions to keep; 0 keeps everything extracted.
    pub target_directions: usize,
    pub stop_margin: f64,
    pub rank_tol: f64,
    pub classifier: LogisticConfig,
    pub center_rows: bool,
}

impl Default for InlpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            target_directions: 0,
            stop_margin: 0.02,
            rank_tol: DEFAULT_RANK_TOL,
            classifier: LogisticConfig {
                l2_lambda: DEFAULT_INLP_L2,
                ..LogisticConfig::default()
            },
            center_rows: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// The last classifier scored at or below `1/C + stop_margin`.
    ChanceReached,
    TargetReached,
    IterationCap,
}

impl StopReason {
    pub fn as_u8(self) -> u8 {
        match self {
            StopReason::ChanceReached => 0,
            StopReason::TargetReached => 1,
            StopReason::IterationCap => 2,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(StopReason::ChanceReached),
            1 => Some(StopReason::TargetReached),
            2 => Some(StopReason::IterationCap),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiasSubspaceArtifact {
    pub basis: OrthonormalBasis,
    pub attribute_name: String,
    /// Training accuracy of the classifier fitted in each round, followed by
    /// the accuracy of one more classifier on the final projected data when
    /// the loop stopped for any reason other than reaching chance. Always one
    /// entry longer than `directions_per_iteration`.
    pub per_iteration_accuracy: Vec<f64>,
    pub directions_per_iteration: Vec<usize>,
    pub class_count: usize,
    pub stop_reason: StopReason,
}

impl BiasSubspaceArtifact {
    pub fn dim_subspace(&self) -> usize {
        self.basis.rank()
    }

    pub fn dim_ambient(&self) -> usize {
        self.basis.dim_ambient()
    }

    /// No direction was extracted: the attribute was already at chance level.
    pub fn is_no_signal(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn chance_level(&self) -> f64 {
        1.0 / self.class_count as f64
    }
}

fn center_weight_rows(w: &Matrix) -> Matrix {
    let all: Vec<usize> = (0..w.rows()).collect();
    let mean = w.mean_of_rows(&all);
    let mut out = w.clone();
    for k in 0..out.rows() {
        for (v, m) in out.row_mut(k).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    out
}

pub fn identify_bias_subspace(
    x: &Matrix,
    y: &LabelVector,
    attribute_name: &str,
    cfg: &InlpConfig,
) -> Result<BiasSubspaceArtifact> {
    identify_bias_subspace_with_rounds(x, y, attribute_name, cfg).map(|(a, _)| a)
}

/// Also returns each round's orthonormal basis as extracted, before stacking.
pub fn identify_bias_subspace_with_rounds(
    x: &Matrix,
    y: &LabelVector,
    attribute_name: &str,
    cfg: &InlpConfig,
) -> Result<(BiasSubspaceArtifact, Vec<OrthonormalBasis>)> {
    if cfg.max_iterations == 0 {
        return Err(Error::InvalidArgument("max_iterations must be >= 1".into()));
    }
    if x.cols() == 0 {
        return Err(Error::EmptyMatrix);
    }
    if x.rows() != y.len() {
        return Err(Error::dims(x.rows(), y.len()));
    }
    y.require_all_present(1)?;
    let c = y.class_count();
    let d = x.cols();
    let threshold = 1.0 / c as f64 + cfg.stop_margin;
    let majority = y.counts().into_iter().max().unwrap_or(0) as f64 / y.len() as f64;
    if majority > threshold {
        log::warn!(
            "inlp {attribute_name}: majority class rate {majority:.4} exceeds the stop threshold {threshold:.4}; \
             the loop will run until the direction target or iteration cap"
        );
    }

    let mut current = x.clone();
    let mut bases: Vec<OrthonormalBasis> = Vec::new();
    let mut trail = Vec::new();
    let mut per_iter = Vec::new();
    let mut extracted = 0usize;
    let mut stop = StopReason::IterationCap;

    for iteration in 1..=cfg.max_iterations {
        let model = fit_logistic(&current, y, &cfg.classifier)?;
        let acc = accuracy(&model, &current, y)?;
        trail.push(acc);
        log::debug!("inlp {attribute_name}: iteration {iteration} accuracy {acc:.4}");
        if acc <= threshold {
            stop = StopReason::ChanceReached;
            break;
        }
        let w = if cfg.center_rows {
            center_weight_rows(&model.weights)
        } else {
            model.weights
        };
        // more classes than dimensions: only D directions can exist anyway
        let w = if w.rows() > d {
            w.select_rows(&(0..d).collect::<Vec<_>>())
        } else {
            w
        };
        let basis = qr_orthonormal_rows(&w, cfg.rank_tol)?;
        if basis.is_empty() {
            return Err(Error::NoProgress { iteration });
        }
        extracted += basis.rank();
        per_iter.push(basis.rank());
        current = project_onto_complement(&current, &basis)?;
        // second pass against earlier rounds keeps rounding error from
        // feeding back into later classifiers
        for earlier in &bases {
            current = project_onto_complement(&current, earlier)?;
        }
        bases.push(basis);
        if cfg.target_directions > 0 && extracted >= cfg.target_directions {
            stop = StopReason::TargetReached;
            break;
        }
        if extracted >= d {
            log::warn!("inlp {attribute_name}: all {d} dimensions removed before reaching chance");
            break;
        }
    }

    let mut basis = if bases.is_empty() {
        OrthonormalBasis::empty(d)
    } else {
        stack_and_reorthonormalize(&bases, cfg.rank_tol)?
    };
    if cfg.target_directions > 0 && basis.rank() > cfg.target_directions {
        basis = basis.truncated(cfg.target_directions);
    }
    if stop != StopReason::ChanceReached {
        // residual leakage after the final projection
        let residual = project_onto_complement(x, &basis)?;
        let model = fit_logistic(&residual, y, &cfg.classifier)?;
        trail.push(accuracy(&model, &residual, y)?);
    }
    let artifact = BiasSubspaceArtifact {
        basis,
        attribute_name: attribute_name.to_string(),
        per_iteration_accuracy: trail,
        directions_per_iteration: per_iter,
        class_count: c,
        stop_reason: stop,
    };
    Ok((artifact, bases))
}

/// Keeps the first `r` directions in extraction order.
pub fn truncate_subspace(artifact: &BiasSubspaceArtifact, r: usize) -> Result<BiasSubspaceArtifact> {
    let db = artifact.dim_subspace();
    if r == 0 || r > db {
        return Err(Error::ROutOfRange { r, max: db });
    }
    Ok(BiasSubspaceArtifact {
        basis: artifact.basis.truncated(r),
        ..artifact.clone()
    })
}
