//! Two-stage training pipeline: stage 1 trains with the confidence-
//! regularized loss, the sieve resolves the dataset, stage 2 retrains with
//! the covariance-corrected loss. Everything is deterministic per seed.

use crate::data::Dataset;
use crate::error::{CalError, Result};
use crate::loss::{
    accumulate_ce_grad, cal_correction, cal_correction_grad, ce_cutoff, cores2_grad, cores2_loss,
    estimate_transition, LossConfig, PeerMode, TransitionEstimate,
};
use crate::matrix::Matrix;
use crate::model::{
    backward_batch, forward_batch, predict_probs_matrix, sgd_step, Checkpoint, LrSchedule,
    MlpParams, OptimState, CHECKPOINT_SCHEMA_VERSION,
};
use crate::rng::{self, item_stream};
use crate::sieve::{construct_dhat, threshold_for_fraction, SieveOutput};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// Per-stage training knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageConfig {
    pub epochs: usize,
    pub lr: LrSchedule,
    pub loss: LossConfig,
    /// Ramp the regularizer weight linearly from 0 to `loss.beta` over this
    /// many epochs. A cold start with the full weight can collapse the model
    /// onto a single confident class before it has learned anything.
    pub beta_warmup_epochs: usize,
}

impl StageConfig {
    fn beta_at(&self, epoch: usize) -> f64 {
        if self.beta_warmup_epochs == 0 {
            self.loss.beta
        } else {
            self.loss.beta * ((epoch as f64 + 1.0) / self.beta_warmup_epochs as f64).min(1.0)
        }
    }
}

/// Full pipeline configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    /// Resolve thresholds from the expected clean fraction when set;
    /// `sieve_l_min`/`sieve_l_max` are used verbatim otherwise.
    pub sieve_fraction: Option<f64>,
    pub sieve_l_min: f64,
    pub sieve_l_max: f64,
    /// Start stage 2 from the stage-1 weights instead of a fresh model.
    pub warm_start_stage2: bool,
    /// Class-balanced resampling of the stage-2 training set.
    pub balanced_resample: bool,
    /// Emit metrics every this many epochs (the final epoch always reports).
    pub metrics_every: usize,
    pub seed: u64,
}

impl RunConfig {
    /// Defaults for the desk-scale runs: the published recipe's epoch counts
    /// (65/100 with a drop at 60) scaled to a 5k-sample dataset.
    pub fn toy_default(seed: u64) -> Self {
        RunConfig {
            schema_version: 1,
            hidden: vec![64, 64],
            batch_size: 128,
            momentum: 0.9,
            weight_decay: 5e-4,
            stage1: StageConfig {
                epochs: 40,
                lr: LrSchedule {
                    initial: 0.1,
                    drop_factor: 10.0,
                    drop_epochs: vec![36],
                },
                loss: LossConfig {
                    beta: 1.0,
                    ..LossConfig::default()
                },
                beta_warmup_epochs: 20,
            },
            stage2: StageConfig {
                epochs: 60,
                lr: LrSchedule {
                    initial: 0.1,
                    drop_factor: 10.0,
                    drop_epochs: vec![36],
                },
                loss: LossConfig {
                    beta: 0.1,
                    ..LossConfig::default()
                },
                beta_warmup_epochs: 10,
            },
            sieve_fraction: Some(0.6),
            sieve_l_min: 0.0,
            sieve_l_max: 0.0,
            warm_start_stage2: false,
            balanced_resample: false,
            metrics_every: 1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage1.epochs == 0 || self.stage2.epochs == 0 {
            return Err(CalError::invalid("epoch counts must be positive"));
        }
        if self.batch_size < 2 {
            return Err(CalError::invalid("batch size must be at least 2"));
        }
        if let Some(f) = self.sieve_fraction {
            if !(0.0 < f && f <= 1.0) {
                return Err(CalError::invalid("sieve fraction must lie in (0,1]"));
            }
        }
        self.stage1.loss.validate()?;
        self.stage2.loss.validate()?;
        Ok(())
    }
}

/// Accuracy of a parameter set against every label column of a dataset.
#[derive(Debug, Clone, Copy)]
pub struct Accuracies {
    pub vs_y_star: f64,
    pub vs_y_clean: f64,
    pub vs_y_tilde: Option<f64>,
}

/// One metrics line, as written to `metrics.csv`.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub epoch: usize,
    pub split: &'static str,
    pub acc_y_star: f64,
    pub acc_y_clean: f64,
    pub acc_y_tilde: Option<f64>,
    pub mean_loss: f64,
    pub lr: f64,
}

/// Evaluate accuracies against all available label columns.
pub fn evaluate(params: &MlpParams, ds: &Dataset) -> Result<Accuracies> {
    if ds.is_empty() {
        return Err(CalError::invalid("empty dataset"));
    }
    let probs = predict_probs_matrix(params, &ds.features)?;
    let mut star = 0usize;
    let mut clean = 0usize;
    let mut tilde = 0usize;
    for i in 0..ds.len() {
        let row = probs.row(i);
        let mut best = 0;
        for (j, &p) in row.iter().enumerate().skip(1) {
            if p > row[best] {
                best = j;
            }
        }
        if best == ds.y_star[i] {
            star += 1;
        }
        if best == ds.y_clean[i] {
            clean += 1;
        }
        if let Some(yt) = &ds.y_tilde {
            if best == yt[i] {
                tilde += 1;
            }
        }
    }
    let n = ds.len() as f64;
    Ok(Accuracies {
        vs_y_star: star as f64 / n,
        vs_y_clean: clean as f64 / n,
        vs_y_tilde: ds.y_tilde.as_ref().map(|_| tilde as f64 / n),
    })
}

/// What the inner loop is minimizing.
enum Driver<'a> {
    /// Confidence-regularized loss (plain CE when beta = 0).
    Cores2,
    /// Covariance-corrected loss over a resolved dataset.
    Cal {
        t_hat: &'a TransitionEstimate,
        y_hat: &'a [Option<usize>],
    },
}

/// Outcome of one training stage.
pub struct StageResult {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<MetricsRow>,
    /// Corrections skipped because the resolved row had no support.
    pub empty_row_corrections: usize,
}

#[allow(clippy::too_many_arguments)]
fn train_loop(
    mut params: MlpParams,
    train: &Dataset,
    test: Option<&Dataset>,
    stage: &StageConfig,
    run: &RunConfig,
    driver: &Driver,
    stage_tag: u64,
    train_indices: Vec<usize>,
) -> Result<StageResult> {
    let y_tilde = train.train_labels();
    // Marginal over the actual training subset.
    let noisy_prior = {
        let mut m = vec![0.0; train.num_classes];
        for &i in &train_indices {
            m[y_tilde[i]] += 1.0;
        }
        for v in m.iter_mut() {
            *v /= train_indices.len() as f64;
        }
        m
    };
    let mut state = OptimState::new(&params, stage.lr.initial, run.momentum, run.weight_decay);
    let mut metrics = Vec::new();
    let mut empty_row_corrections = 0usize;

    for epoch in 0..stage.epochs {
        state.lr = stage.lr.lr_at(epoch);
        let mut loss_cfg = stage.loss;
        loss_cfg.beta = stage.beta_at(epoch);
        let mut order = train_indices.clone();
        let mut shuffle_rng = item_stream(
            run.seed,
            rng::stream::BATCHING,
            (stage_tag << 32) | epoch as u64,
        );
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        let mut batch_index = 0usize;
        for batch in order.chunks(run.batch_size) {
            if batch.len() < 2 {
                continue; // peer pairing needs at least two samples
            }
            let x = Matrix::from_rows(
                batch.iter().map(|&i| train.features.row(i).to_vec()).collect(),
            );
            let cache = forward_batch(&params, &x)?;
            let b = batch.len();
            let scale = 1.0 / b as f64;
            let mut dlogits = Matrix::zeros(b, train.num_classes);
            let mut batch_loss = 0.0;

            // Covariance corrections use the leading cov_fraction of the
            // shuffled batch, reweighted to stay an unbiased batch estimate.
            let cov_count = match driver {
                Driver::Cal { .. } => {
                    ((loss_cfg.cov_fraction * b as f64).ceil() as usize).clamp(1, b)
                }
                _ => 0,
            };
            let cov_scale = if cov_count > 0 {
                b as f64 / cov_count as f64
            } else {
                0.0
            };

            match loss_cfg.peer_mode {
                PeerMode::ExpectedPrior => {
                    for (pos, &i) in batch.iter().enumerate() {
                        let p = cache.probs.row(pos);
                        let mut loss = cores2_loss(p, y_tilde[i], &noisy_prior, &loss_cfg)?;
                        let mut grad = cores2_grad(p, y_tilde[i], &noisy_prior, &loss_cfg)?;
                        if let Driver::Cal { t_hat, y_hat } = driver {
                            if pos < cov_count {
                                if let Some(yh) = y_hat[i] {
                                    match cal_correction(
                                        p,
                                        y_tilde[i],
                                        yh,
                                        t_hat,
                                        loss_cfg.eps_reg,
                                    ) {
                                        Some(c) => {
                                            loss -= c * cov_scale;
                                            let g = cal_correction_grad(
                                                p,
                                                y_tilde[i],
                                                yh,
                                                t_hat,
                                                loss_cfg.eps_reg,
                                            )
                                            .expect("row support checked");
                                            for (gv, cv) in grad.iter_mut().zip(g) {
                                                *gv -= cv * cov_scale;
                                            }
                                        }
                                        None => empty_row_corrections += 1,
                                    }
                                }
                            }
                        }
                        batch_loss += loss;
                        for (k, g) in grad.into_iter().enumerate() {
                            dlogits.set(pos, k, g * scale);
                        }
                    }
                }
                PeerMode::SampledPairs => {
                    let mut peer_rng = item_stream(
                        run.seed,
                        rng::stream::PEER,
                        (stage_tag << 48) | ((epoch as u64) << 24) | batch_index as u64,
                    );
                    for (pos, &i) in batch.iter().enumerate() {
                        let p = cache.probs.row(pos);
                        let n1 = peer_rng.random_range(0..b);
                        let n2 = peer_rng.random_range(0..b);
                        let p1 = cache.probs.row(n1);
                        let y2 = y_tilde[batch[n2]];
                        let beta = loss_cfg.beta;
                        let mut loss = ce_cutoff(p, y_tilde[i], loss_cfg.eps_ce)
                            - beta * ce_cutoff(p1, y2, loss_cfg.eps_reg);
                        // Data term gradient lands on this sample's row, the
                        // peer term's on the peer feature's row.
                        let mut grad_self = vec![0.0; train.num_classes];
                        accumulate_ce_grad(&mut grad_self, p, y_tilde[i], loss_cfg.eps_ce, 1.0);
                        let mut grad_peer = vec![0.0; train.num_classes];
                        accumulate_ce_grad(&mut grad_peer, p1, y2, loss_cfg.eps_reg, -beta);
                        if let Driver::Cal { t_hat, y_hat } = driver {
                            if pos < cov_count {
                                if let Some(yh) = y_hat[i] {
                                    match cal_correction(
                                        p,
                                        y_tilde[i],
                                        yh,
                                        t_hat,
                                        loss_cfg.eps_reg,
                                    ) {
                                        Some(c) => {
                                            loss -= c * cov_scale;
                                            let g = cal_correction_grad(
                                                p,
                                                y_tilde[i],
                                                yh,
                                                t_hat,
                                                loss_cfg.eps_reg,
                                            )
                                            .expect("row support checked");
                                            for (gv, cv) in grad_self.iter_mut().zip(g) {
                                                *gv -= cv * cov_scale;
                                            }
                                        }
                                        None => empty_row_corrections += 1,
                                    }
                                }
                            }
                        }
                        batch_loss += loss;
                        for (k, g) in grad_self.into_iter().enumerate() {
                            dlogits.set(pos, k, dlogits.get(pos, k) + g * scale);
                        }
                        for (k, g) in grad_peer.into_iter().enumerate() {
                            dlogits.set(n1, k, dlogits.get(n1, k) + g * scale);
                        }
                    }
                }
            }

            if !batch_loss.is_finite() {
                return Err(CalError::Divergence(format!(
                    "non-finite loss at epoch {epoch}, batch {batch_index}"
                )));
            }
            let grads = backward_batch(&params, &cache, &dlogits)?;
            sgd_step(&mut params, &grads, &mut state)?;
            loss_sum += batch_loss;
            seen += b;
            batch_index += 1;
        }

        let last = epoch + 1 == stage.epochs;
        if last || (run.metrics_every > 0 && epoch.is_multiple_of(run.metrics_every)) {
            let mean_loss = loss_sum / seen.max(1) as f64;
            let acc = evaluate(&params, train)?;
            metrics.push(MetricsRow {
                epoch,
                split: "train",
                acc_y_star: acc.vs_y_star,
                acc_y_clean: acc.vs_y_clean,
                acc_y_tilde: acc.vs_y_tilde,
                mean_loss,
                lr: state.lr,
            });
            if let Some(ts) = test {
                let acc = evaluate(&params, ts)?;
                metrics.push(MetricsRow {
                    epoch,
                    split: "test",
                    acc_y_star: acc.vs_y_star,
                    acc_y_clean: acc.vs_y_clean,
                    acc_y_tilde: acc.vs_y_tilde,
                    mean_loss,
                    lr: state.lr,
                });
            }
        }
    }

    Ok(StageResult {
        checkpoint: Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            params,
            optim: state,
            epoch: stage.epochs,
            seed: run.seed,
        },
        metrics,
        empty_row_corrections,
    })
}

/// Stage 1: train with the confidence-regularized loss on the noisy labels.
pub fn run_stage1(
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &RunConfig,
) -> Result<StageResult> {
    cfg.validate()?;
    if train.y_tilde.is_none() {
        return Err(CalError::precondition("stage 1 requires noisy labels"));
    }
    let params = MlpParams::init(train.dim(), &cfg.hidden, train.num_classes, cfg.seed);
    train_loop(
        params,
        train,
        test,
        &cfg.stage1,
        cfg,
        &Driver::Cores2,
        1,
        (0..train.len()).collect(),
    )
}

/// Resolve the dataset with the stage-1 model. Thresholds come from
/// `sieve_fraction` (quantile of the adjusted losses) when set.
pub fn run_sieve(ck: &Checkpoint, ds: &Dataset, cfg: &RunConfig) -> Result<SieveOutput> {
    let y_tilde = ds
        .y_tilde
        .as_ref()
        .ok_or_else(|| CalError::precondition("sieve requires noisy labels"))?;
    let probs = predict_probs_matrix(&ck.params, &ds.features)?;
    let prior = ds.label_marginal();
    let (l_min, l_max) = match cfg.sieve_fraction {
        Some(f) => {
            // Two passes: adjusted losses first, then the quantile threshold.
            let probe = construct_dhat(
                &probs,
                y_tilde,
                &prior,
                f64::INFINITY,
                f64::INFINITY,
                &cfg.stage1.loss,
            )?;
            let t = threshold_for_fraction(&probe.adjusted_losses, f)?;
            (t, t)
        }
        None => (cfg.sieve_l_min, cfg.sieve_l_max),
    };
    construct_dhat(&probs, y_tilde, &prior, l_min, l_max, &cfg.stage1.loss)
}

/// Stage 2: retrain with the covariance-corrected loss using the resolved
/// dataset; dropped examples keep the base loss with no correction.
pub fn run_stage2(
    train: &Dataset,
    test: Option<&Dataset>,
    sieve: &SieveOutput,
    cfg: &RunConfig,
    warm_from: Option<&Checkpoint>,
) -> Result<StageResult> {
    cfg.validate()?;
    let y_tilde = train
        .y_tilde
        .as_ref()
        .ok_or_else(|| CalError::precondition("stage 2 requires noisy labels"))?;
    if sieve.y_hat.len() != train.len() {
        return Err(CalError::invalid("sieve output does not align with dataset"));
    }
    let pairs = sieve.resolved_pairs(y_tilde);
    let t_hat = estimate_transition(&pairs, train.num_classes)?;

    let params = match (cfg.warm_start_stage2, warm_from) {
        (true, Some(ck)) => ck.params.clone(),
        _ => MlpParams::init(train.dim(), &cfg.hidden, train.num_classes, cfg.seed),
    };

    let indices = if cfg.balanced_resample {
        balanced_indices(y_tilde, train.num_classes, cfg.seed)
    } else {
        (0..train.len()).collect()
    };

    train_loop(
        params,
        train,
        test,
        &cfg.stage2,
        cfg,
        &Driver::Cal {
            t_hat: &t_hat,
            y_hat: &sieve.y_hat,
        },
        2,
        indices,
    )
}

/// Ablation baseline: the stage-2 schedule and loss settings with the
/// covariance correction absent. Shares the stage-2 initialization and
/// batching streams, so it differs from [`run_stage2`] only in the loss.
pub fn run_stage2_baseline(
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &RunConfig,
) -> Result<StageResult> {
    cfg.validate()?;
    if train.y_tilde.is_none() {
        return Err(CalError::precondition("stage 2 requires noisy labels"));
    }
    let params = MlpParams::init(train.dim(), &cfg.hidden, train.num_classes, cfg.seed);
    train_loop(
        params,
        train,
        test,
        &cfg.stage2,
        cfg,
        &Driver::Cores2,
        2,
        (0..train.len()).collect(),
    )
}

/// Deterministic class-balanced subset: every noisy class contributes the
/// size of the smallest one.
fn balanced_indices(y_tilde: &[usize], num_classes: usize, seed: u64) -> Vec<usize> {
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &y) in y_tilde.iter().enumerate() {
        per_class[y].push(i);
    }
    let cap = per_class
        .iter()
        .filter(|v| !v.is_empty())
        .map(|v| v.len())
        .min()
        .unwrap_or(0);
    let mut rng = item_stream(seed, rng::stream::BATCHING, u64::MAX);
    let mut out = Vec::new();
    for mut class in per_class {
        class.shuffle(&mut rng);
        out.extend(class.into_iter().take(cap));
    }
    out.sort_unstable();
    out
}

/// Render metrics rows in the documented CSV layout.
pub fn metrics_to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("epoch,split,acc_y_star,acc_y_clean,acc_y_tilde,mean_loss,lr\n");
    for r in rows {
        let tilde = r
            .acc_y_tilde
            .map(|v| format!("{v:.6}"))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{},{:.10e},{:.4e}",
            r.epoch, r.split, r.acc_y_star, r.acc_y_clean, tilde, r.mean_loss, r.lr
        );
    }
    out
}

pub fn write_metrics_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    std::fs::write(path, metrics_to_csv(rows))?;
    Ok(())
}
