//! Dense row-major matrices and the handful of factorizations the debiasing
//! pipeline needs: pivoted Householder QR for extracting an orthonormal basis
//! of a weight matrix's row space, projection onto the orthogonal complement
//! of a basis, and order-preserving re-orthonormalization of stacked bases.
//!
//! Everything is computed in `f64`. Basis rows are sign-normalized (first
//! nonzero entry positive) so that the same input always serializes to the
//! same bytes.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default relative tolerance for discarding numerically dependent directions.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

// Entries below this magnitude are treated as zero when fixing row signs.
const SIGN_EPS: f64 = 1e-12;

/// Row-major dense matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(rows * cols, data.len()));
        }
        if cols > 0 {
            if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    row: pos / cols,
                    col: pos % cols,
                });
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dims(cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact panics on a zero chunk size
        let width = self.cols.max(1);
        let take = if self.cols == 0 { 0 } else { self.rows };
        self.data.chunks_exact(width).take(take)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Component-wise mean of the selected rows.
    pub fn mean_of_rows(&self, indices: &[usize]) -> Vec<f64> {
        let mut mean = vec![0.0; self.cols];
        for &i in indices {
            for (m, v) in mean.iter_mut().zip(self.row(i)) {
                *m += v;
            }
        }
        let n = indices.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Scales every nonzero row to unit Euclidean norm.
    pub fn normalize_rows(&mut self) {
        let cols = self.cols;
        if cols == 0 {
            return;
        }
        self.data.par_chunks_mut(cols).for_each(|row| {
            let n = norm(row);
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            }
        });
    }

    pub(crate) fn from_parts_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A `rank × D` matrix whose rows are orthonormal.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthonormalBasis {
    rows: Matrix,
}

impl OrthonormalBasis {
    /// The rank-0 basis of `R^dim_ambient`.
    pub fn empty(dim_ambient: usize) -> Self {
        Self {
            rows: Matrix::zeros(0, dim_ambient),
        }
    }

    /// Wraps rows that are already orthonormal, checking each Gram entry
    /// against `tol`.
    pub fn from_orthonormal_rows(rows: Matrix, tol: f64) -> Result<Self> {
        let basis = Self { rows };
        let err = basis.gram_error();
        if err > tol {
            return Err(Error::InvalidArgument(format!(
                "basis rows are not orthonormal (max Gram deviation {err:e})"
            )));
        }
        Ok(basis)
    }

    #[inline]
    pub fn dim_ambient(&self) -> usize {
        self.rows.cols()
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.rank() == 0
    }

    pub fn row(&self, k: usize) -> &[f64] {
        self.rows.row(k)
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.rows.iter_rows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.rows
    }

    /// Keeps the first `r` rows.
    pub fn truncated(&self, r: usize) -> Self {
        let r = r.min(self.rank());
        let d = self.dim_ambient();
        Self {
            rows: Matrix::from_parts_unchecked(r, d, self.rows.as_slice()[..r * d].to_vec()),
        }
    }

    /// Coordinates `U x` of a vector in the basis.
    pub fn coordinates(&self, x: &[f64]) -> Vec<f64> {
        self.iter_rows().map(|u| dot(u, x)).collect()
    }

    /// Lifts basis coordinates back to ambient space: `Uᵀ c`.
    pub fn lift(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_ambient()];
        for (u, &c) in self.iter_rows().zip(coords) {
            for (o, v) in out.iter_mut().zip(u) {
                *o += c * v;
            }
        }
        out
    }

    /// Largest absolute deviation of `U Uᵀ` from the identity.
    pub fn gram_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in self.iter_rows().enumerate() {
            for (j, b) in self.iter_rows().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(a, b) - target).abs());
            }
        }
        worst
    }
}

fn fix_sign(row: &mut [f64]) {
    if let Some(first) = row.iter().find(|v| v.abs() > SIGN_EPS) {
        if *first < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

/// Orthonormal basis of the row space of `w` (a `C × D` matrix, `C ≤ D`).
///
/// Householder QR with column pivoting is run on `wᵀ`; the leading columns of
/// `Q` whose `|R_ii|` exceed `rank_tol × max_j |R_jj|` become the basis rows.
/// Pivoting keeps the diagonal of `R` non-increasing, so the retained columns
/// span the column space of `wᵀ` even when `w` is rank deficient.
pub fn qr_orthonormal_rows(w: &Matrix, rank_tol: f64) -> Result<OrthonormalBasis> {
    let (c, d) = (w.rows(), w.cols());
    if c == 0 || d == 0 {
        return Err(Error::EmptyMatrix);
    }
    if c > d {
        return Err(Error::InvalidArgument(format!(
            "weight matrix has more rows ({c}) than columns ({d})"
        )));
    }
    if !(rank_tol > 0.0) {
        return Err(Error::InvalidArgument(format!("rank_tol must be > 0, got {rank_tol}")));
    }
    if let Some(pos) = w.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: pos / d,
            col: pos % d,
        });
    }

    // Columns of wᵀ are the rows of w.
    let mut cols: Vec<Vec<f64>> = w.iter_rows().map(<[f64]>::to_vec).collect();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(c);
    let mut diag: Vec<f64> = Vec::with_capacity(c);

    for k in 0..c {
        let tail_norm2 = |col: &Vec<f64>| col[k..].iter().map(|v| v * v).sum::<f64>();
        let mut pivot = k;
        let mut best = tail_norm2(&cols[k]);
        for (j, col) in cols.iter().enumerate().skip(k + 1) {
            let n2 = tail_norm2(col);
            if n2 > best {
                best = n2;
                pivot = j;
            }
        }
        if best == 0.0 {
            break;
        }
        cols.swap(k, pivot);

        let x = &cols[k][k..];
        let xnorm = best.sqrt();
        let alpha = if x[0] >= 0.0 { -xnorm } else { xnorm };
        let mut v = vec![0.0; d];
        v[k..].copy_from_slice(x);
        v[k] -= alpha;
        let vnorm2: f64 = v[k..].iter().map(|t| t * t).sum();
        if vnorm2 > 0.0 {
            let beta = 2.0 / vnorm2;
            for col in cols.iter_mut().skip(k) {
                let s = beta * dot(&v[k..], &col[k..]);
                for (ci, vi) in col[k..].iter_mut().zip(&v[k..]) {
                    *ci -= s * vi;
                }
            }
            let inv = vnorm2.sqrt().recip();
            v.iter_mut().for_each(|t| *t *= inv);
        }
        reflectors.push(v);
        diag.push(alpha);
    }

    let max_diag = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rank = if max_diag == 0.0 {
        0
    } else {
        diag.iter()
            .take_while(|r| r.abs() > rank_tol * max_diag)
            .count()
    };

    // Q e_i = H_0 H_1 ... H_{k-1} e_i, applied right to left.
    let mut data = Vec::with_capacity(rank * d);
    for i in 0..rank {
        let mut q = vec![0.0; d];
        q[i] = 1.0;
        for v in reflectors.iter().rev() {
            let s = 2.0 * dot(v, &q);
            for (qi, vi) in q.iter_mut().zip(v) {
                *qi -= s * vi;
            }
        }
        fix_sign(&mut q);
        data.extend_from_slice(&q);
    }
    Ok(OrthonormalBasis {
        rows: Matrix::from_parts_unchecked(rank, d, data),
    })
}

/// `X (I − UᵀU)`: removes from every row its component inside `span(U)`.
pub fn project_onto_complement(x: &Matrix, basis: &OrthonormalBasis) -> Result<Matrix> {
    if basis.dim_ambient() != x.cols() {
        return Err(Error::dims(basis.dim_ambient(), x.cols()));
    }
    let mut out = x.clone();
    if basis.is_empty() || x.cols() == 0 {
        return Ok(out);
    }
    let cols = x.cols();
    out.data.par_chunks_mut(cols).for_each(|row| {
        remove_components(row, basis);
    });
    Ok(out)
}

pub(crate) fn remove_components(row: &mut [f64], basis: &OrthonormalBasis) {
    let coords = basis.coordinates(row);
    for (u, c) in basis.iter_rows().zip(coords) {
        for (r, v) in row.iter_mut().zip(u) {
            *r -= c * v;
        }
    }
}

/// Concatenates bases in order and re-orthonormalizes with two-pass modified
/// Gram–Schmidt. Later rows are orthogonalized against earlier ones; a row
/// whose residual norm falls to `rank_tol` or below is dropped.
pub fn stack_and_reorthonormalize(
    bases: &[OrthonormalBasis],
    rank_tol: f64,
) -> Result<OrthonormalBasis> {
    let first = bases.first().ok_or(Error::EmptyInput("no bases to stack"))?;
    let d = first.dim_ambient();
    if let Some(bad) = bases.iter().find(|b| b.dim_ambient() != d) {
        return Err(Error::dims(d, bad.dim_ambient()));
    }
    let mut accepted: Vec<Vec<f64>> = Vec::new();
    for row in bases.iter().flat_map(|b| b.iter_rows()) {
        let mut v = row.to_vec();
        let original = norm(&v);
        if original == 0.0 {
            continue;
        }
        for _pass in 0..2 {
            for u in &accepted {
                let c = dot(u, &v);
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= c * ui;
                }
            }
        }
        let n = norm(&v);
        if n <= rank_tol * original {
            continue;
        }
        v.iter_mut().for_each(|t| *t /= n);
        fix_sign(&mut v);
        accepted.push(v);
    }
    let rank = accepted.len();
    Ok(OrthonormalBasis {
        rows: Matrix::from_parts_unchecked(rank, d, accepted.concat()),
    })
}
