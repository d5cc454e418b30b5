//! Sample sieve: resolve each noisy example into kept / relabeled / dropped
//! by comparing its regularizer-adjusted loss against two thresholds, and
//! collect the resolved set used for transition estimation.

use crate::error::{CalError, Result};
use crate::loss::{cores2_loss, LossConfig};
use crate::matrix::Matrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    /// Noisy label assumed Bayes-optimal: resolved label is the noisy label.
    Kept,
    /// Noisy label assumed corrupted: resolved label is the model argmax.
    Relabeled,
    /// Ambiguous: excluded from the resolved set.
    Dropped,
}

/// Per-example sieve outcome plus the thresholds actually used.
#[derive(Debug, Clone)]
pub struct SieveOutput {
    pub decisions: Vec<Decision>,
    /// Resolved label per example; `None` for dropped ones.
    pub y_hat: Vec<Option<usize>>,
    pub adjusted_losses: Vec<f64>,
    pub l_min: f64,
    pub l_max: f64,
}

impl SieveOutput {
    /// `(y_hat, y_tilde)` pairs of the resolved examples, in input order.
    pub fn resolved_pairs(&self, y_tilde: &[usize]) -> Vec<(usize, usize)> {
        self.y_hat
            .iter()
            .zip(y_tilde)
            .filter_map(|(yh, &yt)| yh.map(|y| (y, yt)))
            .collect()
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let mut kept = 0;
        let mut relabeled = 0;
        let mut dropped = 0;
        for d in &self.decisions {
            match d {
                Decision::Kept => kept += 1,
                Decision::Relabeled => relabeled += 1,
                Decision::Dropped => dropped += 1,
            }
        }
        (kept, relabeled, dropped)
    }
}

/// Loss-adjustment baseline: the class-mean of the regularized loss at this
/// prediction. The regularizer term is label-independent, so the adjusted
/// loss `cores2(y) - alpha` is independent of `beta`; what remains is the
/// cross-entropy of the label minus the mean cross-entropy over all classes.
pub fn compute_alpha(probs: &[f64], noisy_prior: &[f64], config: &LossConfig) -> Result<f64> {
    let k = probs.len();
    let mut total = 0.0;
    for j in 0..k {
        total += cores2_loss(probs, j, noisy_prior, config)?;
    }
    Ok(total / k as f64)
}

fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (j, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = j;
        }
    }
    best
}

/// Resolve every example: adjusted loss `<= l_min` keeps the noisy label,
/// `> l_max` relabels to the model argmax, anything between is dropped.
pub fn construct_dhat(
    probs: &Matrix,
    y_tilde: &[usize],
    noisy_prior: &[f64],
    l_min: f64,
    l_max: f64,
    config: &LossConfig,
) -> Result<SieveOutput> {
    if probs.rows() != y_tilde.len() {
        return Err(CalError::invalid("probs and labels must align"));
    }
    if l_min > l_max {
        return Err(CalError::invalid("need l_min <= l_max"));
    }
    let n = y_tilde.len();
    let mut decisions = Vec::with_capacity(n);
    let mut y_hat = Vec::with_capacity(n);
    let mut adjusted_losses = Vec::with_capacity(n);
    for i in 0..n {
        let p = probs.row(i);
        let alpha = compute_alpha(p, noisy_prior, config)?;
        let adjusted = cores2_loss(p, y_tilde[i], noisy_prior, config)? - alpha;
        adjusted_losses.push(adjusted);
        if adjusted <= l_min {
            decisions.push(Decision::Kept);
            y_hat.push(Some(y_tilde[i]));
        } else if adjusted > l_max {
            decisions.push(Decision::Relabeled);
            y_hat.push(Some(argmax(p)));
        } else {
            decisions.push(Decision::Dropped);
            y_hat.push(None);
        }
    }
    Ok(SieveOutput {
        decisions,
        y_hat,
        adjusted_losses,
        l_min,
        l_max,
    })
}

/// Smallest threshold whose pass fraction (`adjusted <= threshold`) reaches
/// `target_fraction`.
pub fn threshold_for_fraction(adjusted_losses: &[f64], target_fraction: f64) -> Result<f64> {
    if adjusted_losses.is_empty() {
        return Err(CalError::invalid("empty loss list"));
    }
    if !(0.0 < target_fraction && target_fraction <= 1.0) {
        return Err(CalError::invalid("target fraction must lie in (0,1]"));
    }
    let mut sorted = adjusted_losses.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite losses"));
    let n = sorted.len();
    let need = (target_fraction * n as f64).ceil() as usize;
    Ok(sorted[need.clamp(1, n) - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::softmax;

    fn cfg(beta: f64, eps: f64) -> LossConfig {
        LossConfig {
            beta,
            eps_ce: eps,
            eps_reg: eps,
            prior_mode: crate::loss::PriorMode::Plain,
            ..LossConfig::default()
        }
    }

    #[test]
    fn alpha_is_log_k_for_uniform_prediction() {
        let k = 4;
        let probs = vec![1.0 / k as f64; k];
        let prior = vec![1.0 / k as f64; k];
        let alpha = compute_alpha(&probs, &prior, &cfg(0.0, 1e-12)).unwrap();
        assert!((alpha - (k as f64).ln()).abs() < 1e-9, "{alpha}");
    }

    #[test]
    fn alpha_matches_spec_arithmetic() {
        // K=2, probs (0.9, 0.1), no cutoff, beta 0: -(ln .9 + ln .1)/2.
        let mut config = cfg(0.0, 1e-300);
        config.eps_ce = 0.0;
        config.eps_reg = 0.0;
        let alpha = compute_alpha(&[0.9, 0.1], &[0.5, 0.5], &config).unwrap();
        assert!((alpha - 1.2039728043259361).abs() < 1e-12, "{alpha}");
    }

    #[test]
    fn adjusted_loss_sign_tracks_above_average_likelihood() {
        // The beta term cancels between the loss and alpha, so the adjusted
        // loss is negative exactly for labels with above-average CE.
        let p = softmax(&[1.2, 0.1, -0.4]);
        let prior = [0.2, 0.5, 0.3];
        for beta in [0.0, 2.0] {
            let config = cfg(beta, 1e-8);
            let alpha = compute_alpha(&p, &prior, &config).unwrap();
            let adjusted: Vec<f64> = (0..3)
                .map(|j| cores2_loss(&p, j, &prior, &config).unwrap() - alpha)
                .collect();
            assert!(adjusted[0] < 0.0);
            assert!(adjusted[2] > 0.0);
            let mean: f64 = adjusted.iter().sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-12);
        }
    }

    #[test]
    fn infinite_thresholds_keep_or_relabel_everything() {
        let probs = Matrix::from_rows(vec![
            softmax(&[2.0, 0.0]),
            softmax(&[-1.0, 0.5]),
            softmax(&[0.3, 0.2]),
        ]);
        let y = vec![1, 0, 1];
        let prior = [0.5, 0.5];
        let config = cfg(1.0, 1e-8);

        let all_kept = construct_dhat(&probs, &y, &prior, f64::INFINITY, f64::INFINITY, &config)
            .unwrap();
        assert!(all_kept.decisions.iter().all(|d| *d == Decision::Kept));
        assert_eq!(
            all_kept.resolved_pairs(&y),
            vec![(1, 1), (0, 0), (1, 1)]
        );

        let all_rel = construct_dhat(
            &probs,
            &y,
            &prior,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
            &config,
        )
        .unwrap();
        assert!(all_rel.decisions.iter().all(|d| *d == Decision::Relabeled));
        // Relabeled to the argmax of each prediction.
        assert_eq!(
            all_rel.y_hat,
            vec![Some(0), Some(1), Some(0)]
        );
    }

    #[test]
    fn bayes_posterior_model_separates_clean_from_corrupted() {
        // Near-one-hot posteriors at threshold zero keep exactly the
        // examples whose noisy label matches the Bayes label.
        let sharp = 12.0;
        let probs = Matrix::from_rows(vec![
            softmax(&[sharp, 0.0]),
            softmax(&[sharp, 0.0]),
            softmax(&[0.0, sharp]),
            softmax(&[0.0, sharp]),
        ]);
        let y_star = [0, 0, 1, 1];
        let y_tilde = vec![0, 1, 1, 0];
        let mut config = cfg(1.0, 1e-300);
        config.eps_ce = 0.0;
        config.eps_reg = 0.0;
        let out = construct_dhat(&probs, &y_tilde, &[0.5, 0.5], 0.0, 0.0, &config).unwrap();
        for i in 0..4 {
            let expect = if y_tilde[i] == y_star[i] {
                Decision::Kept
            } else {
                Decision::Relabeled
            };
            assert_eq!(out.decisions[i], expect, "example {i}");
            assert_eq!(out.y_hat[i], Some(y_star[i]), "example {i}");
        }
    }

    #[test]
    fn equal_thresholds_drop_nothing() {
        let probs = Matrix::from_rows(
            (0..20)
                .map(|i| softmax(&[(i as f64) * 0.2 - 2.0, 0.0]))
                .collect(),
        );
        let y: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let config = cfg(1.0, 1e-8);
        let out = construct_dhat(&probs, &y, &[0.5, 0.5], 0.1, 0.1, &config).unwrap();
        let (kept, relabeled, dropped) = out.counts();
        assert_eq!(dropped, 0);
        assert_eq!(kept + relabeled, 20);
    }

    #[test]
    fn sieve_partition_and_monotonicity() {
        let probs = Matrix::from_rows(
            (0..50)
                .map(|i| softmax(&[(i as f64) * 0.1 - 2.5, 0.3, -0.2]))
                .collect(),
        );
        let y: Vec<usize> = (0..50).map(|i| (i * 7) % 3).collect();
        let prior = [0.4, 0.3, 0.3];
        let config = cfg(1.5, 1e-8);

        let base = construct_dhat(&probs, &y, &prior, -0.5, 0.5, &config).unwrap();
        let wider = construct_dhat(&probs, &y, &prior, 0.0, 0.5, &config).unwrap();
        let lower = construct_dhat(&probs, &y, &prior, -0.5, 0.0, &config).unwrap();

        for i in 0..50 {
            // Exactly one decision per example, determined by the rule.
            let a = base.adjusted_losses[i];
            let expect = if a <= -0.5 {
                Decision::Kept
            } else if a > 0.5 {
                Decision::Relabeled
            } else {
                Decision::Dropped
            };
            assert_eq!(base.decisions[i], expect);
            // Raising l_min can only grow the kept set.
            if base.decisions[i] == Decision::Kept {
                assert_eq!(wider.decisions[i], Decision::Kept);
            }
            // Lowering l_max can only grow the relabeled set.
            if base.decisions[i] == Decision::Relabeled {
                assert_eq!(lower.decisions[i], Decision::Relabeled);
            }
        }
        assert!(construct_dhat(&probs, &y, &prior, 0.5, -0.5, &config).is_err());
    }

    #[test]
    fn threshold_order_statistics() {
        let losses = [-2.0, -1.0, 0.0, 1.0];
        assert_eq!(threshold_for_fraction(&losses, 0.5).unwrap(), -1.0);
        assert_eq!(threshold_for_fraction(&losses, 1.0).unwrap(), 1.0);
        assert_eq!(threshold_for_fraction(&losses, 0.25).unwrap(), -2.0);
        assert!(threshold_for_fraction(&[], 0.5).is_err());
    }

    #[test]
    fn threshold_hits_requested_quantile_on_distinct_values() {
        let n = 10_000;
        let losses: Vec<f64> = (0..n).map(|i| (i as f64) * 1e-3).collect();
        let t = threshold_for_fraction(&losses, 0.6154).unwrap();
        let frac = losses.iter().filter(|&&l| l <= t).count() as f64 / n as f64;
        assert!((0.6154..=0.6155).contains(&frac), "fraction {frac}");
    }
}
