//! Multinomial (softmax) logistic regression trained by full-batch gradient
//! descent with Armijo backtracking.
//!
//! The objective is mean cross-entropy plus `(λ/2)‖W‖²_F`; the intercept is not
//! penalized. Features are centered internally before optimization and the
//! intercept is shifted back afterwards, which leaves the optimum unchanged but
//! makes plain gradient descent converge much faster on uncentered
//! embeddings. Initialization is all-zero, so a fit is a deterministic
//! function of its inputs.

use rand::seq::SliceRandom;

use super::labels::LabelVector;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticConfig {
    pub l2_lambda: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Recorded for provenance; the solver itself draws no random numbers.
    pub seed: u64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            l2_lambda: 1e-4,
            max_iters: 500,
            grad_tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticModel {
    /// `C × D` class weight rows.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub iterations: usize,
    /// True when the gradient ∞-norm reached `grad_tol` before `max_iters`.
    pub converged: bool,
    pub final_grad_inf: f64,
}

impl LogisticModel {
    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter_rows()
            .zip(&self.bias)
            .map(|(w, b)| dot(w, x) + b)
            .collect()
    }

    /// Argmax logit, ties toward the lower class index.
    pub fn predict_one(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.logits(x);
        softmax_in_place(&mut z);
        z
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
    max + sum.ln()
}

fn check_shapes(x: &Matrix, y: &LabelVector) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::dims(x.rows(), y.len()));
    }
    Ok(())
}

/// Objective value and gradient `(∂/∂W, ∂/∂b)` at `(weights, bias)`.
pub fn loss_and_gradient(
    x: &Matrix,
    y: &LabelVector,
    weights: &Matrix,
    bias: &[f64],
    l2_lambda: f64,
) -> Result<(f64, Matrix, Vec<f64>)> {
    check_shapes(x, y)?;
    let c = bias.len();
    if weights.rows() != c {
        return Err(Error::dims(c, weights.rows()));
    }
    if weights.cols() != x.cols() {
        return Err(Error::dims(x.cols(), weights.cols()));
    }
    Ok(evaluate(x, y, weights, bias, l2_lambda, true))
}

fn evaluate(
    x: &Matrix,
    y: &LabelVector,
    weights: &Matrix,
    bias: &[f64],
    l2_lambda: f64,
    with_grad: bool,
) -> (f64, Matrix, Vec<f64>) {
    let (n, d, c) = (x.rows(), x.cols(), bias.len());
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad_w = Matrix::zeros(if with_grad { c } else { 0 }, d);
    let mut grad_b = vec![0.0; c];
    let mut z = vec![0.0; c];
    for (i, xi) in x.iter_rows().enumerate() {
        for (k, (w, b)) in weights.iter_rows().zip(bias).enumerate() {
            z[k] = dot(w, xi) + b;
        }
        let label = y.get(i);
        let target_logit = z[label];
        let lse = softmax_in_place(&mut z);
        loss += lse - target_logit;
        if with_grad {
            z[label] -= 1.0;
            for (k, &r) in z.iter().enumerate() {
                if r != 0.0 {
                    for (g, v) in grad_w.row_mut(k).iter_mut().zip(xi) {
                        *g += r * v;
                    }
                }
                grad_b[k] += r;
            }
        }
    }
    loss *= inv_n;
    let w_sq: f64 = weights.as_slice().iter().map(|v| v * v).sum();
    loss += 0.5 * l2_lambda * w_sq;
    if with_grad {
        for k in 0..c {
            let w = weights.row(k);
            for (g, wv) in grad_w.row_mut(k).iter_mut().zip(w) {
                *g = *g * inv_n + l2_lambda * wv;
            }
            grad_b[k] *= inv_n;
        }
    }
    (loss, grad_w, grad_b)
}

/// Fits a softmax regression model. Every class in `0..y.class_count()` must
/// occur at least once.
pub fn fit_logistic(x: &Matrix, y: &LabelVector, cfg: &LogisticConfig) -> Result<LogisticModel> {
    check_shapes(x, y)?;
    y.require_all_present(1)?;
    if !(cfg.grad_tol > 0.0) || !(cfg.l2_lambda >= 0.0) {
        return Err(Error::InvalidArgument(
            "grad_tol must be > 0 and l2_lambda >= 0".into(),
        ));
    }
    let (n, d, c) = (x.rows(), x.cols(), y.class_count());

    let all: Vec<usize> = (0..n).collect();
    let mean = x.mean_of_rows(&all);
    let mut centered = x.clone();
    for i in 0..n {
        for (v, m) in centered.row_mut(i).iter_mut().zip(&mean) {
            *v -= m;
        }
    }

    let mut weights = Matrix::zeros(c, d);
    let mut bias = vec![0.0; c];
    let mut step = 1.0f64;
    let mut iterations = 0;
    let mut converged = false;
    let (mut loss, mut gw, mut gb) = evaluate(&centered, y, &weights, &bias, cfg.l2_lambda, true);
    let mut grad_inf = grad_inf_norm(&gw, &gb, &mean);

    while iterations < cfg.max_iters {
        if grad_inf <= cfg.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let g2: f64 = gw.as_slice().iter().chain(&gb).map(|v| v * v).sum();
        step = (step * 2.0).min(1e4);
        let mut accepted = false;
        while step > 1e-16 {
            let cand_w = axpy(weights.as_slice(), -step, gw.as_slice());
            let cand_w = Matrix::from_parts_unchecked(c, d, cand_w);
            let cand_b = axpy(&bias, -step, &gb);
            let (cand_loss, _, _) = evaluate(&centered, y, &cand_w, &cand_b, cfg.l2_lambda, false);
            if cand_loss <= loss - 1e-4 * step * g2 {
                weights = cand_w;
                bias = cand_b;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        (loss, gw, gb) = evaluate(&centered, y, &weights, &bias, cfg.l2_lambda, true);
        grad_inf = grad_inf_norm(&gw, &gb, &mean);
    }
    if grad_inf <= cfg.grad_tol {
        converged = true;
    }

    // undo centering: W(x − μ) + b' = Wx + (b' − Wμ)
    for (k, b) in bias.iter_mut().enumerate() {
        *b -= dot(weights.row(k), &mean);
    }
    Ok(LogisticModel {
        weights,
        bias,
        iterations,
        converged,
        final_grad_inf: grad_inf,
    })
}

fn axpy(x: &[f64], a: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| xi + a * yi).collect()
}

/// ∞-norm of the gradient with respect to the uncentered parameters: the
/// weight gradient gains `g_b ⊗ μ` once the bias absorbs `−Wμ`.
fn grad_inf_norm(gw: &Matrix, gb: &[f64], mean: &[f64]) -> f64 {
    let mut m = gb.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (k, g) in gb.iter().enumerate() {
        for (w, mu) in gw.row(k).iter().zip(mean) {
            m = m.max((w + g * mu).abs());
        }
    }
    m
}

/// Fraction of rows whose argmax logit equals the label.
pub fn accuracy(model: &LogisticModel, x: &Matrix, y: &LabelVector) -> Result<f64> {
    check_shapes(x, y)?;
    if x.cols() != model.weights.cols() {
        return Err(Error::dims(model.weights.cols(), x.cols()));
    }
    if x.rows() == 0 {
        return Err(Error::EmptyInput("no rows to score"));
    }
    let correct = x
        .iter_rows()
        .zip(y.as_slice())
        .filter(|(row, &label)| model.predict_one(row) == label)
        .count();
    Ok(correct as f64 / x.rows() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeResult {
    pub train_acc: f64,
    pub test_acc: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Stratified split: from each class, `round(test_frac · n_c)` samples (at
/// least one, at most `n_c − 1`) go to the test side. Both index lists are
/// returned in ascending order.
pub fn stratified_split(
    y: &LabelVector,
    test_frac: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test_frac must lie in (0, 1), got {test_frac}"
        )));
    }
    y.require_all_present(2)?;
    let mut rng = rng::seeded(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); y.class_count()];
    for (i, &l) in y.as_slice().iter().enumerate() {
        by_class[l].push(i);
    }
    let mut train = Vec::with_capacity(y.len());
    let mut test = Vec::new();
    for mut members in by_class {
        members.shuffle(&mut rng);
        let n = members.len();
        let k = ((test_frac * n as f64).round() as usize).clamp(1, n - 1);
        test.extend_from_slice(&members[..k]);
        train.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Linear probe with the default solver settings.
pub fn train_probe(x: &Matrix, y: &LabelVector, split_seed: u64, test_frac: f64) -> Result<ProbeResult> {
    train_probe_with(x, y, split_seed, test_frac, &LogisticConfig::default())
}

pub fn train_probe_with(
    x: &Matrix,
    y: &LabelVector,
    split_seed: u64,
    test_frac: f64,
    cfg: &LogisticConfig,
) -> Result<ProbeResult> {
    check_shapes(x, y)?;
    let (train, test) = stratified_split(y, test_frac, split_seed)?;
    let (xtr, ytr) = (x.select_rows(&train), y.select(&train));
    let (xte, yte) = (x.select_rows(&test), y.select(&test));
    let model = fit_logistic(&xtr, &ytr, cfg)?;
    Ok(ProbeResult {
        train_acc: accuracy(&model, &xtr, &ytr)?,
        test_acc: accuracy(&model, &xte, &yte)?,
        n_train: train.len(),
        n_test: test.len(),
    })
}
