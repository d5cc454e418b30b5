//! Instance-dependent label-noise synthesis.
//!
//! Per-sample flip rates come from a truncated normal around the target
//! noise rate; a random projection of the features decides where the flipped
//! mass goes. Above 50% noise the per-class flip mass is capped at 0.9 of the
//! keep-clean mass so labels stay informative.

use crate::error::{CalError, Result};
use crate::matrix::Matrix;
use crate::rng::{self, item_stream, substream};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as NormalDist};

/// Ratio of keep-clean mass that any single wrong class may receive.
pub const CAP_RATIO: f64 = 0.9;

/// Standard deviation of the per-sample flip-rate distribution.
pub const FLIP_RATE_SD: f64 = 0.1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseGenConfig {
    /// Target overall noise rate.
    pub eta: f64,
    pub num_classes: usize,
    /// Feature dimension of each sample.
    pub feature_dim: usize,
    pub seed: u64,
}

impl NoiseGenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(CalError::invalid("eta must lie in [0,1]"));
        }
        if self.num_classes < 2 {
            return Err(CalError::invalid("need at least 2 classes"));
        }
        if self.feature_dim < 1 {
            return Err(CalError::invalid("feature dimension must be >= 1"));
        }
        Ok(())
    }
}

/// Outcome of corrupting one sample.
#[derive(Debug, Clone)]
pub struct NoiseRecord {
    /// Sampled flip rate for this sample.
    pub q: f64,
    /// Final label distribution the noisy label was drawn from.
    pub p: Vec<f64>,
    pub y_tilde: usize,
}

const REJECTION_CAP: usize = 1_000_000;

/// One draw from a normal restricted to `[lo, hi]`. Rejection sampling with
/// an inverse-CDF fallback once the retry budget runs out, so the call always
/// terminates.
pub fn sample_truncated_normal(
    mean: f64,
    sd: f64,
    lo: f64,
    hi: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    if lo >= hi {
        return Err(CalError::invalid("truncation range must satisfy lo < hi"));
    }
    if sd <= 0.0 {
        return Err(CalError::invalid("standard deviation must be positive"));
    }
    let normal = Normal::new(mean, sd).map_err(|e| CalError::invalid(e.to_string()))?;
    for _ in 0..REJECTION_CAP {
        let x = normal.sample(rng);
        if (lo..=hi).contains(&x) {
            return Ok(x);
        }
    }
    let dist = NormalDist::new(mean, sd).map_err(|e| CalError::invalid(e.to_string()))?;
    let (c_lo, c_hi) = (dist.cdf(lo), dist.cdf(hi));
    let u: f64 = rng.random();
    Ok(dist
        .inverse_cdf(c_lo + u * (c_hi - c_lo))
        .clamp(lo, hi))
}

/// Mean of a normal truncated to `[lo, hi]`, by adaptive quadrature of the
/// truncated density. Used to calibrate realized noise rates.
pub fn truncated_normal_mean(mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    // Simpson's rule on a fine fixed grid is plenty at these scales.
    let n = 20_000usize;
    let h = (hi - lo) / n as f64;
    let pdf = |x: f64| {
        let z = (x - mean) / sd;
        (-0.5 * z * z).exp()
    };
    let mut mass = pdf(lo) + pdf(hi);
    let mut moment = lo * pdf(lo) + hi * pdf(hi);
    for i in 1..n {
        let x = lo + i as f64 * h;
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        mass += w * pdf(x);
        moment += w * x * pdf(x);
    }
    moment / mass
}

fn masked_softmax(logits: &[f64], masked: usize) -> Vec<f64> {
    let mut max = f64::NEG_INFINITY;
    for (j, &v) in logits.iter().enumerate() {
        if j != masked && v > max {
            max = v;
        }
    }
    let mut out = vec![0.0; logits.len()];
    let mut sum = 0.0;
    for (j, &v) in logits.iter().enumerate() {
        if j != masked {
            let e = (v - max).exp();
            out[j] = e;
            sum += e;
        }
    }
    for v in out.iter_mut() {
        *v /= sum;
    }
    out
}

/// Clip wrong-class masses to `CAP_RATIO * p[y]` and hand the excess to the
/// still-uncapped wrong classes in proportion to their mass; if every wrong
/// class is capped, rescale the whole vector back onto the simplex.
fn apply_cap(p: &mut [f64], y: usize) {
    let cap = CAP_RATIO * p[y];
    loop {
        let mut excess = 0.0;
        let mut capped = vec![false; p.len()];
        for (j, v) in p.iter_mut().enumerate() {
            if j != y && *v > cap {
                excess += *v - cap;
                *v = cap;
                capped[j] = true;
            }
        }
        if excess == 0.0 {
            return;
        }
        let free: Vec<usize> = (0..p.len())
            .filter(|&j| j != y && !capped[j] && p[j] < cap)
            .collect();
        if free.is_empty() {
            let total: f64 = p.iter().sum();
            for v in p.iter_mut() {
                *v /= total;
            }
            return;
        }
        let free_mass: f64 = free.iter().map(|&j| p[j]).sum();
        if free_mass > 0.0 {
            for &j in &free {
                p[j] += excess * p[j] / free_mass;
            }
        } else {
            for &j in &free {
                p[j] += excess / free.len() as f64;
            }
        }
        // Redistribution may push a free class over the cap; loop until fixed.
    }
}

fn sample_from(p: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, &pj) in p.iter().enumerate() {
        acc += pj;
        if u < acc {
            return j;
        }
    }
    p.len() - 1
}

/// Corrupt `clean_labels` with instance-dependent noise.
///
/// A single projection matrix `W` (feature_dim × K, standard normal) is drawn
/// per dataset; each sample's wrong-label distribution is the softmax of
/// `x_n^T W` with the clean class masked out, scaled by the sample's flip
/// rate `q_n ~ N(eta, 0.1^2, [0,1])`. Per-sample RNG streams make the output
/// independent of generation order.
pub fn inject_noise(
    features: &Matrix,
    clean_labels: &[usize],
    config: &NoiseGenConfig,
) -> Result<Vec<NoiseRecord>> {
    config.validate()?;
    let n = features.rows();
    let k = config.num_classes;
    if clean_labels.len() != n {
        return Err(CalError::invalid("labels and features must align"));
    }
    if features.cols() != config.feature_dim {
        return Err(CalError::invalid("feature dimension mismatch"));
    }
    if clean_labels.iter().any(|&y| y >= k) {
        return Err(CalError::invalid("clean label out of class range"));
    }
    if !features.is_finite() {
        return Err(CalError::invalid("features must be finite"));
    }

    // W drawn once per dataset from its own substream.
    let mut wrng = substream(config.seed, rng::stream::NOISE_WEIGHTS);
    let std_normal = Normal::new(0.0, 1.0).expect("valid");
    let mut w = Matrix::zeros(k, config.feature_dim); // row c = projection for class c
    for v in w.data_mut() {
        *v = std_normal.sample(&mut wrng);
    }

    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let mut srng = item_stream(config.seed, rng::stream::NOISE_SAMPLE_BASE, i as u64);
        let q = sample_truncated_normal(config.eta, FLIP_RATE_SD, 0.0, 1.0, &mut srng)?;
        let y = clean_labels[i];

        let x = features.row(i);
        let mut logits = vec![0.0; k];
        for (c, l) in logits.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (xv, wv) in x.iter().zip(w.row(c)) {
                acc += xv * wv;
            }
            *l = acc;
        }
        logits[y] = f64::NEG_INFINITY;
        let mut p = masked_softmax(&logits, y);
        for v in p.iter_mut() {
            *v *= q;
        }
        p[y] = 1.0 - q;
        apply_cap(&mut p, y);

        let y_tilde = sample_from(&p, &mut srng);
        records.push(NoiseRecord { q, p, y_tilde });
    }
    Ok(records)
}

/// Aggregate audit of a corrupted dataset.
#[derive(Debug, Clone)]
pub struct NoiseAudit {
    pub overall_flip_rate: f64,
    /// Realized flip rate per clean class (NaN-free: classes with no samples
    /// report 0).
    pub per_class_flip_rate: Vec<f64>,
    /// Empirical transition matrix: row i is the realized label distribution
    /// of samples whose clean class is i.
    pub transition: Vec<Vec<f64>>,
    /// Histogram of the sampled flip rates over 20 equal bins of [0,1].
    pub q_histogram: Vec<usize>,
    pub mean_q: f64,
    /// Largest violation of the wrong-class cap across all samples
    /// (`max_j p_j - 0.9 p_y`); non-positive when the cap held everywhere.
    pub max_cap_violation: f64,
}

pub fn audit_noise(records: &[NoiseRecord], clean_labels: &[usize]) -> Result<NoiseAudit> {
    if records.len() != clean_labels.len() {
        return Err(CalError::invalid("records and labels must align"));
    }
    if records.is_empty() {
        return Err(CalError::invalid("empty audit input"));
    }
    let k = records[0].p.len();
    let n = records.len();
    let mut flips = 0usize;
    let mut class_counts = vec![0usize; k];
    let mut class_flips = vec![0usize; k];
    let mut transition = vec![vec![0.0; k]; k];
    let mut q_histogram = vec![0usize; 20];
    let mut mean_q = 0.0;
    let mut max_cap_violation = f64::NEG_INFINITY;

    for (r, &y) in records.iter().zip(clean_labels) {
        class_counts[y] += 1;
        if r.y_tilde != y {
            flips += 1;
            class_flips[y] += 1;
        }
        transition[y][r.y_tilde] += 1.0;
        let bin = ((r.q * 20.0) as usize).min(19);
        q_histogram[bin] += 1;
        mean_q += r.q;
        let worst_off = r
            .p
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != y)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        max_cap_violation = max_cap_violation.max(worst_off - CAP_RATIO * r.p[y]);
    }

    for (i, row) in transition.iter_mut().enumerate() {
        if class_counts[i] > 0 {
            for v in row.iter_mut() {
                *v /= class_counts[i] as f64;
            }
        }
    }
    let per_class_flip_rate = (0..k)
        .map(|i| {
            if class_counts[i] > 0 {
                class_flips[i] as f64 / class_counts[i] as f64
            } else {
                0.0
            }
        })
        .collect();

    Ok(NoiseAudit {
        overall_flip_rate: flips as f64 / n as f64,
        per_class_flip_rate,
        transition,
        q_histogram,
        mean_q: mean_q / n as f64,
        max_cap_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn config(eta: f64, k: usize, d: usize, seed: u64) -> NoiseGenConfig {
        NoiseGenConfig {
            eta,
            num_classes: k,
            feature_dim: d,
            seed,
        }
    }

    fn random_features(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut m = Matrix::zeros(n, d);
        for v in m.data_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        m
    }

    #[test]
    fn truncated_draws_stay_in_range() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let x = sample_truncated_normal(0.4, 0.1, 0.0, 1.0, &mut rng).unwrap();
            assert!((0.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn truncated_mean_matches_half_normal_closed_form() {
        // Truncating N(0, sd) to [0, 1] is a half-normal: mean sd*sqrt(2/pi).
        let quad = truncated_normal_mean(0.0, 0.1, 0.0, 1.0);
        let closed = 0.1 * (2.0 / std::f64::consts::PI).sqrt();
        assert!((quad - closed).abs() < 1e-6, "quad {quad} closed {closed}");

        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| sample_truncated_normal(0.0, 0.1, 0.0, 1.0, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean - closed).abs() < 0.002, "sample mean {mean}");
    }

    #[test]
    fn truncated_mean_near_symmetric_at_center() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| sample_truncated_normal(0.4, 0.1, 0.0, 1.0, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.4).abs() < 0.002, "sample mean {mean}");
    }

    #[test]
    fn rejects_bad_truncation_arguments() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        assert!(sample_truncated_normal(0.0, 0.1, 1.0, 0.0, &mut rng).is_err());
        assert!(sample_truncated_normal(0.0, 0.0, 0.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let features = random_features(64, 3, 9);
        let labels: Vec<usize> = (0..64).map(|i| i % 3).collect();
        let cfg = config(0.4, 3, 3, 77);
        let a = inject_noise(&features, &labels, &cfg).unwrap();
        let b = inject_noise(&features, &labels, &cfg).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.q, rb.q);
            assert_eq!(ra.p, rb.p);
            assert_eq!(ra.y_tilde, rb.y_tilde);
        }
    }

    #[test]
    fn p_is_a_probability_vector_with_clean_mass() {
        let features = random_features(500, 4, 5);
        let labels: Vec<usize> = (0..500).map(|i| i % 4).collect();
        let cfg = config(0.3, 4, 4, 13);
        for (r, &y) in inject_noise(&features, &labels, &cfg)
            .unwrap()
            .iter()
            .zip(&labels)
        {
            let sum: f64 = r.p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(r.p.iter().all(|&v| (0.0..=1.0).contains(&v)));
            // cap never fires at eta=0.3 and K=4, so clean mass is exact
            assert!((r.p[y] - (1.0 - r.q)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_features_flip_uniformly_over_wrong_classes() {
        let features = Matrix::zeros(8, 3);
        let labels = vec![1usize; 8];
        let cfg = config(0.5, 5, 3, 21);
        for r in inject_noise(&features, &labels, &cfg).unwrap() {
            let wrong: Vec<f64> = r
                .p
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != 1)
                .map(|(_, &v)| v)
                .collect();
            for v in &wrong {
                assert!((v - wrong[0]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn k1_is_rejected() {
        let features = Matrix::zeros(4, 2);
        let labels = vec![0usize; 4];
        let cfg = config(0.2, 1, 2, 3);
        assert!(inject_noise(&features, &labels, &cfg).is_err());
    }

    #[test]
    fn cap_holds_at_high_noise() {
        let features = random_features(2000, 3, 6);
        let labels: Vec<usize> = (0..2000).map(|i| i % 3).collect();
        let cfg = config(0.75, 3, 3, 31);
        let records = inject_noise(&features, &labels, &cfg).unwrap();
        let audit = audit_noise(&records, &labels).unwrap();
        assert!(
            audit.max_cap_violation <= 1e-9,
            "violation {}",
            audit.max_cap_violation
        );
        // With eta=0.75 the raw q often exceeds the binary-style cap, so the
        // cap must actually have fired somewhere.
        assert!(records.iter().any(|r| (r.p[0] + r.p[1] + r.p[2] - 1.0).abs() < 1e-9));
    }

    #[test]
    fn cap_binary_renormalizes() {
        // K=2 leaves nowhere to push excess mass, so the whole vector is
        // rescaled: q > 9/19 lands on exactly (1, 0.9)/1.9.
        let mut p = vec![0.3, 0.7];
        apply_cap(&mut p, 0);
        assert!((p[0] - 1.0 / 1.9).abs() < 1e-12);
        assert!((p[1] - 0.9 / 1.9).abs() < 1e-12);
    }

    #[test]
    fn audit_counts_flips() {
        let records = vec![
            NoiseRecord {
                q: 0.1,
                p: vec![0.9, 0.1],
                y_tilde: 0,
            },
            NoiseRecord {
                q: 0.2,
                p: vec![0.8, 0.2],
                y_tilde: 1,
            },
        ];
        let audit = audit_noise(&records, &[0, 0]).unwrap();
        assert_eq!(audit.overall_flip_rate, 0.5);
        assert_eq!(audit.per_class_flip_rate[0], 0.5);
        let zero = audit_noise(&records[..1], &[0]).unwrap();
        assert_eq!(zero.overall_flip_rate, 0.0);
    }
}
