//! The loss family: cut-off cross-entropy, confidence-regularized loss
//! (plain and sqrt prior), sampled peer loss, and the per-sample
//! covariance-corrected loss, each with analytic gradients with respect to
//! the classifier logits.
//!
//! All losses consume softmax probabilities; gradients are propagated through
//! the softmax and the exact cutoff expression, so finite differences on the
//! logits must agree to first order.

use crate::error::{CalError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    Plain,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeerMode {
    /// Peer term from explicitly sampled index pairs.
    SampledPairs,
    /// Peer term as the prior-weighted expectation over classes (the
    /// confidence-regularizer form). Default: more stable in training.
    ExpectedPrior,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossConfig {
    /// Cutoff inside the data cross-entropy term.
    pub eps_ce: f64,
    /// Cutoff inside the regularizer and covariance terms.
    pub eps_reg: f64,
    /// Weight of the confidence regularizer.
    pub beta: f64,
    pub prior_mode: PriorMode,
    pub peer_mode: PeerMode,
    /// Fraction of each batch used to estimate the covariance correction.
    pub cov_fraction: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            eps_ce: 1e-8,
            eps_reg: 1e-5,
            beta: 1.0,
            prior_mode: PriorMode::Sqrt,
            peer_mode: PeerMode::ExpectedPrior,
            cov_fraction: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eps_ce <= 0.0 || self.eps_reg <= 0.0 {
            return Err(CalError::invalid("cutoffs must be positive"));
        }
        if self.beta < 0.0 {
            return Err(CalError::invalid("beta must be non-negative"));
        }
        if !(0.0 < self.cov_fraction && self.cov_fraction <= 1.0) {
            return Err(CalError::invalid("cov_fraction must lie in (0,1]"));
        }
        Ok(())
    }
}

/// Cut-off cross-entropy `-ln(p[label] + eps)`.
pub fn ce_cutoff(probs: &[f64], label: usize, eps: f64) -> f64 {
    -(probs[label] + eps).ln()
}

/// Add `weight * d/dlogits[-ln(p[label] + eps)]` into `out`, with
/// `p = softmax(logits)`: the cutoff keeps the usual `p - onehot` shape scaled
/// by `p[label] / (p[label] + eps)`.
pub fn accumulate_ce_grad(out: &mut [f64], probs: &[f64], label: usize, eps: f64, weight: f64) {
    let scale = weight * probs[label] / (probs[label] + eps);
    for (k, g) in out.iter_mut().enumerate() {
        let delta = if k == label { 1.0 } else { 0.0 };
        *g += scale * (probs[k] - delta);
    }
}

/// Gradient of [`ce_cutoff`] with respect to the logits.
pub fn ce_cutoff_grad(probs: &[f64], label: usize, eps: f64) -> Vec<f64> {
    let mut out = vec![0.0; probs.len()];
    accumulate_ce_grad(&mut out, probs, label, eps, 1.0);
    out
}

/// Class weights of the confidence regularizer: the noisy prior, or its
/// square root renormalized to sum one.
pub fn prior_weights(noisy_prior: &[f64], mode: PriorMode) -> Result<Vec<f64>> {
    if noisy_prior.is_empty() {
        return Err(CalError::invalid("empty class prior"));
    }
    let total: f64 = noisy_prior.iter().sum();
    if total <= 0.0 || noisy_prior.iter().any(|&p| p < 0.0) {
        return Err(CalError::invalid(
            "prior must be non-negative with positive mass",
        ));
    }
    match mode {
        PriorMode::Plain => Ok(noisy_prior.iter().map(|&p| p / total).collect()),
        PriorMode::Sqrt => {
            let roots: Vec<f64> = noisy_prior.iter().map(|&p| (p / total).sqrt()).collect();
            let norm: f64 = roots.iter().sum();
            Ok(roots.into_iter().map(|r| r / norm).collect())
        }
    }
}

/// Confidence-regularized loss:
/// `ce(p, y_tilde; eps_ce) - beta * sum_i w_i * ce(p, i; eps_reg)`.
pub fn cores2_loss(
    probs: &[f64],
    y_tilde: usize,
    noisy_prior: &[f64],
    config: &LossConfig,
) -> Result<f64> {
    let w = prior_weights(noisy_prior, config.prior_mode)?;
    let reg: f64 = w
        .iter()
        .enumerate()
        .map(|(i, wi)| wi * ce_cutoff(probs, i, config.eps_reg))
        .sum();
    Ok(ce_cutoff(probs, y_tilde, config.eps_ce) - config.beta * reg)
}

/// Gradient of [`cores2_loss`] with respect to the logits.
pub fn cores2_grad(
    probs: &[f64],
    y_tilde: usize,
    noisy_prior: &[f64],
    config: &LossConfig,
) -> Result<Vec<f64>> {
    let w = prior_weights(noisy_prior, config.prior_mode)?;
    let mut out = vec![0.0; probs.len()];
    accumulate_ce_grad(&mut out, probs, y_tilde, config.eps_ce, 1.0);
    for (i, wi) in w.iter().enumerate() {
        accumulate_ce_grad(&mut out, probs, i, config.eps_reg, -config.beta * wi);
    }
    Ok(out)
}

/// Sampled peer loss: `ce(p_n, y_n; eps) - ce(p_{n1}, y_{n2}; eps)` for peer
/// indices supplied by the caller.
pub fn peer_loss_sampled(
    probs_n: &[f64],
    y_tilde_n: usize,
    probs_n1: &[f64],
    y_tilde_n2: usize,
    eps: f64,
) -> f64 {
    ce_cutoff(probs_n, y_tilde_n, eps) - ce_cutoff(probs_n1, y_tilde_n2, eps)
}

/// Indicator-based transition estimate built from a resolved dataset.
///
/// The per-sample estimate at `(y_hat_n, y_tilde_n)` is the indicator matrix
/// `1{y_hat_n = i, y_tilde_n = j}`; the averaged matrix is the
/// row-conditional mean: row `i` averages over the samples with
/// `y_hat = i`, which is what the indicator actually informs.
#[derive(Debug, Clone)]
pub struct TransitionEstimate {
    /// K×K row-conditional average matrix. Rows with no support are zero.
    pub matrix: Vec<Vec<f64>>,
    /// Samples contributing to each row.
    pub row_counts: Vec<usize>,
    /// `(y_hat, y_tilde)` per kept sample, in input order.
    pub per_sample: Vec<(usize, usize)>,
}

impl TransitionEstimate {
    pub fn row_is_empty(&self, i: usize) -> bool {
        self.row_counts[i] == 0
    }
}

/// Estimate the transition matrix from resolved labels `y_hat` and noisy
/// labels `y_tilde` of the kept samples.
pub fn estimate_transition(
    dhat: &[(usize, usize)],
    num_classes: usize,
) -> Result<TransitionEstimate> {
    if dhat.is_empty() {
        return Err(CalError::invalid(
            "cannot estimate a transition from an empty set",
        ));
    }
    let mut matrix = vec![vec![0.0; num_classes]; num_classes];
    let mut row_counts = vec![0usize; num_classes];
    for &(y_hat, y_tilde) in dhat {
        if y_hat >= num_classes || y_tilde >= num_classes {
            return Err(CalError::invalid("label out of class range"));
        }
        matrix[y_hat][y_tilde] += 1.0;
        row_counts[y_hat] += 1;
    }
    for (i, row) in matrix.iter_mut().enumerate() {
        if row_counts[i] > 0 {
            for v in row.iter_mut() {
                *v /= row_counts[i] as f64;
            }
        }
    }
    Ok(TransitionEstimate {
        matrix,
        row_counts,
        per_sample: dhat.to_vec(),
    })
}

/// Per-sample covariance correction
/// `sum_j (1{y_tilde = j} - T[y_hat][j]) * ce(p, j; eps_reg)`.
///
/// Returns `None` when the resolved row has no support in the averaged
/// matrix (the caller counts those and applies no correction).
pub fn cal_correction(
    probs: &[f64],
    y_tilde: usize,
    y_hat: usize,
    t_hat: &TransitionEstimate,
    eps_reg: f64,
) -> Option<f64> {
    if t_hat.row_is_empty(y_hat) {
        return None;
    }
    let row = &t_hat.matrix[y_hat];
    let mut corr = 0.0;
    for (j, &tbar) in row.iter().enumerate() {
        let indicator = if y_tilde == j { 1.0 } else { 0.0 };
        corr += (indicator - tbar) * ce_cutoff(probs, j, eps_reg);
    }
    Some(corr)
}

/// Gradient of [`cal_correction`] with respect to the logits.
pub fn cal_correction_grad(
    probs: &[f64],
    y_tilde: usize,
    y_hat: usize,
    t_hat: &TransitionEstimate,
    eps_reg: f64,
) -> Option<Vec<f64>> {
    if t_hat.row_is_empty(y_hat) {
        return None;
    }
    let row = &t_hat.matrix[y_hat];
    let mut out = vec![0.0; probs.len()];
    for (j, &tbar) in row.iter().enumerate() {
        let indicator = if y_tilde == j { 1.0 } else { 0.0 };
        accumulate_ce_grad(&mut out, probs, j, eps_reg, indicator - tbar);
    }
    Some(out)
}

/// Covariance-assisted loss for one sample: the confidence-regularized base
/// term minus the covariance correction. Samples outside the resolved set
/// (`y_hat = None`) receive the base term only.
pub fn cal_loss(
    probs: &[f64],
    y_tilde: usize,
    y_hat: Option<usize>,
    t_hat: &TransitionEstimate,
    noisy_prior: &[f64],
    config: &LossConfig,
) -> Result<f64> {
    let base = cores2_loss(probs, y_tilde, noisy_prior, config)?;
    let corr = y_hat
        .and_then(|yh| cal_correction(probs, y_tilde, yh, t_hat, config.eps_reg))
        .unwrap_or(0.0);
    Ok(base - corr)
}

/// Gradient of [`cal_loss`] with respect to the logits.
pub fn cal_loss_grad(
    probs: &[f64],
    y_tilde: usize,
    y_hat: Option<usize>,
    t_hat: &TransitionEstimate,
    noisy_prior: &[f64],
    config: &LossConfig,
) -> Result<Vec<f64>> {
    let mut out = cores2_grad(probs, y_tilde, noisy_prior, config)?;
    if let Some(g) =
        y_hat.and_then(|yh| cal_correction_grad(probs, y_tilde, yh, t_hat, config.eps_reg))
    {
        for (o, g) in out.iter_mut().zip(g) {
            *o -= g;
        }
    }
    Ok(out)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
