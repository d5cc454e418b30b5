//! Seeded random-instance generators and the verification suites built from
//! them. Each suite checks one identity or bound over many random worlds and
//! reports the worst case observed.

use crate::error::Result;
use crate::oracle::expectations::{
    binary_covariances, decoupling_residual_binary, decoupling_residual_multiclass,
    downweight_residual,
};
use crate::oracle::instance::{FeatureAtom, FiniteInstance, TabularClassifier};
use crate::oracle::search::{
    argmin_over_classifiers, peer_bound_check, proxy_bound_check, Objective,
};
use crate::rng::{self, substream};
use rand::Rng;

/// Draw a strictly positive feature marginal.
fn random_px(m: usize, rng: &mut impl Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|u| u / total).collect()
}

/// Random binary labels in `{-1,+1}` with both classes present.
fn random_labels_pm1(m: usize, rng: &mut impl Rng) -> Vec<i32> {
    loop {
        let labels: Vec<i32> = (0..m)
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect();
        if labels.contains(&1) && labels.contains(&-1) {
            return labels;
        }
    }
}

/// Per-feature rates in `[lo, hi]` whose mass-weighted mean is identical in
/// both Bayes classes: a shared base plus deviations recentered within each
/// class. The binary decoupling identity (and the bounds built on it) holds
/// exactly only when the rate functions are mean-uncorrelated with the Bayes
/// class, so the suite generators stay inside that regime.
fn class_centered_rates(
    px: &[f64],
    labels: &[i32],
    lo: f64,
    hi: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let m = px.len();
    let base = rng.random_range(lo..hi);
    let amp = (base - lo).min(hi - base) / 2.0;
    let mut dev: Vec<f64> = (0..m)
        .map(|_| {
            if amp > 0.0 {
                rng.random_range(-amp..amp)
            } else {
                0.0
            }
        })
        .collect();
    for class in [-1, 1] {
        let mass: f64 = (0..m)
            .filter(|&x| labels[x] == class)
            .map(|x| px[x])
            .sum();
        if mass == 0.0 {
            continue;
        }
        let mean: f64 = (0..m)
            .filter(|&x| labels[x] == class)
            .map(|x| px[x] * dev[x])
            .sum::<f64>()
            / mass;
        for x in 0..m {
            if labels[x] == class {
                dev[x] -= mean;
            }
        }
    }
    dev.into_iter().map(|d| base + d).collect()
}

/// Random binary world with per-feature rates drawn from `[rate_lo, rate_hi]`,
/// mean-uncorrelated with the Bayes class (see [`class_centered_rates`]).
pub fn random_binary_instance(
    m: usize,
    rate_lo: f64,
    rate_hi: f64,
    rng: &mut impl Rng,
) -> FiniteInstance {
    let px = random_px(m, rng);
    let labels = random_labels_pm1(m, rng);
    let e_plus = class_centered_rates(&px, &labels, rate_lo, rate_hi, rng);
    let e_minus = class_centered_rates(&px, &labels, rate_lo, rate_hi, rng);
    FiniteInstance::binary(&px, &labels, &e_plus, &e_minus).expect("generator invariants")
}

/// Same, but rejects worlds whose average signal `1 - e+ - e-` falls below
/// `min_signal` (the bounds degenerate as it approaches zero).
pub fn random_binary_instance_with_signal(
    m: usize,
    rate_lo: f64,
    rate_hi: f64,
    min_signal: f64,
    rng: &mut impl Rng,
) -> FiniteInstance {
    loop {
        let inst = random_binary_instance(m, rate_lo, rate_hi, rng);
        if inst.noise_stats().z1_mean() >= min_signal {
            return inst;
        }
    }
}

/// Binary world with constant (class-dependent) rates.
pub fn random_constant_rate_instance(
    m: usize,
    rate_hi: f64,
    rng: &mut impl Rng,
) -> FiniteInstance {
    let px = random_px(m, rng);
    let labels = random_labels_pm1(m, rng);
    let ep = rng.random_range(0.0..rate_hi);
    let em = rng.random_range(0.0..rate_hi);
    FiniteInstance::binary(&px, &labels, &vec![ep; m], &vec![em; m]).expect("generator invariants")
}

/// Binary world whose positive-class mass lands in `[p_lo, p_hi]`.
pub fn random_prior_instance(
    m: usize,
    p_lo: f64,
    p_hi: f64,
    rate_lo: f64,
    rate_hi: f64,
    rng: &mut impl Rng,
) -> FiniteInstance {
    loop {
        let inst = random_binary_instance(m, rate_lo, rate_hi, rng);
        let p = inst.noise_stats().p_star;
        if (p_lo..=p_hi).contains(&p) {
            return inst;
        }
    }
}

/// Balanced binary world (`p* = 0.5` exactly) with one mirrored pair of
/// low-mass high-noise features, one per class.
///
/// A corrupted proxy can only flip the minimizer on a feature whose signal
/// satisfies `2 Z1(x) < E[Z1]`; the generator plants exactly the hard pair in
/// that regime (so corrupted trials produce genuinely nonzero error) and
/// verifies that even the worst corruption pattern — both hard features
/// mislabeled — stays below the stated bound at the tightest exercised
/// quality `tau = 0.9`. It retries until every margin holds, which makes the
/// bound suite deterministic rather than merely likely.
pub fn random_balanced_tau_instance(m: usize, rng: &mut impl Rng) -> FiniteInstance {
    assert!(m >= 6 && m.is_multiple_of(2), "need an even m >= 6");
    let half = m / 2;
    const HARD_MASS: f64 = 0.02;

    'retry: loop {
        // Each class holds exactly half the mass: one hard feature plus
        // normalized soft features.
        let mut px = Vec::with_capacity(m);
        let mut labels = Vec::with_capacity(m);
        for class in [1, -1] {
            let raw: Vec<f64> = (0..half - 1).map(|_| rng.random_range(0.5..1.5)).collect();
            let sum: f64 = raw.iter().sum();
            px.push(HARD_MASS);
            labels.push(class);
            for u in &raw {
                px.push((0.5 - HARD_MASS) * u / sum);
                labels.push(class);
            }
        }

        // Mirrored hard rates keep Z1 identical across the pair, so the rate
        // functions stay mean-uncorrelated with the class.
        let hard_plus = rng.random_range(0.38..0.45);
        let hard_minus = rng.random_range(0.38..0.45);
        let mut e_plus = vec![0.0; m];
        let mut e_minus = vec![0.0; m];
        e_plus[0] = hard_plus;
        e_minus[0] = hard_minus;
        e_plus[half] = hard_plus;
        e_minus[half] = hard_minus;

        let soft: Vec<usize> = (0..m).filter(|&x| x != 0 && x != half).collect();
        let soft_px: Vec<f64> = soft.iter().map(|&x| px[x]).collect();
        let soft_labels: Vec<i32> = soft.iter().map(|&x| labels[x]).collect();
        let ep = class_centered_rates(&soft_px, &soft_labels, 0.08, 0.28, rng);
        let em = class_centered_rates(&soft_px, &soft_labels, 0.08, 0.28, rng);
        for (j, &x) in soft.iter().enumerate() {
            e_plus[x] = ep[j];
            e_minus[x] = em[j];
        }

        let inst =
            FiniteInstance::binary(&px, &labels, &e_plus, &e_minus).expect("generator invariants");
        let stats = inst.noise_stats();
        let z1_mean = stats.z1_mean();
        // Hard features must be flippable, soft features must not be.
        for &x in &soft {
            if 2.0 * stats.z1[x] <= z1_mean {
                continue 'retry;
            }
        }
        if 2.0 * stats.z1[0] >= z1_mean {
            continue 'retry;
        }
        // Worst pattern mislabels both hard features; the bound at tau = 0.9
        // must still cover it.
        if 2.0 * HARD_MASS > 4.0 * 0.1 * (stats.eps_plus + stats.eps_minus) / z1_mean {
            continue 'retry;
        }
        return inst;
    }
}

/// Uniformly random labeling of a world's features.
pub fn random_classifier(inst: &FiniteInstance, rng: &mut impl Rng) -> TabularClassifier {
    TabularClassifier::new(
        (0..inst.num_features())
            .map(|_| rng.random_range(0..inst.num_classes))
            .collect(),
    )
}

/// Multi-class world whose expected transition matrix satisfies the
/// off-diagonal column condition while the per-feature matrices vary.
///
/// Row `i` of a feature's matrix deviates from the base class-dependent
/// matrix only where the feature's Bayes label is `i`, and the deviations are
/// mass-weighted to zero within each class, so both the class-conditional and
/// the unconditional expectations reproduce the base matrix exactly.
pub fn random_multiclass_instance(k: usize, m: usize, rng: &mut impl Rng) -> FiniteInstance {
    assert!(k >= 3 && m >= k);
    let px = random_px(m, rng);
    // Every class gets at least one feature.
    let mut labels: Vec<usize> = (0..m)
        .map(|x| if x < k { x } else { rng.random_range(0..k) })
        .collect();
    // Shuffle class positions so class mass is not systematically front-loaded.
    for x in (1..m).rev() {
        let y = rng.random_range(0..=x);
        labels.swap(x, y);
    }

    let hi = 0.3 / (k - 1) as f64;
    let base_rates: Vec<f64> = (0..k).map(|_| rng.random_range(0.02..hi)).collect();

    // Raw deviations for the Bayes row of every feature, then center them
    // within each class using the conditional feature weights.
    let mut dev = vec![vec![0.0; k]; m];
    for x in 0..m {
        let i = labels[x];
        for j in 0..k {
            if j != i {
                let amp = 0.45 * (base_rates[j] - 0.001);
                dev[x][j] = rng.random_range(-amp..amp);
            }
        }
    }
    for i in 0..k {
        let class_mass: f64 = (0..m).filter(|&x| labels[x] == i).map(|x| px[x]).sum();
        for j in 0..k {
            if j == i {
                continue;
            }
            let mean: f64 = (0..m)
                .filter(|&x| labels[x] == i)
                .map(|x| px[x] * dev[x][j])
                .sum::<f64>()
                / class_mass;
            for x in 0..m {
                if labels[x] == i {
                    dev[x][j] -= mean;
                }
            }
        }
    }

    let features = (0..m)
        .map(|x| {
            let mut transition = vec![vec![0.0; k]; k];
            for i in 0..k {
                let mut off_sum = 0.0;
                for j in 0..k {
                    if j != i {
                        let d = if labels[x] == i { dev[x][j] } else { 0.0 };
                        transition[i][j] = base_rates[j] + d;
                        off_sum += transition[i][j];
                    }
                }
                transition[i][i] = 1.0 - off_sum;
            }
            FeatureAtom {
                id: x,
                px: px[x],
                bayes_label: labels[x],
                transition,
            }
        })
        .collect();
    FiniteInstance::new(k, features).expect("generator invariants")
}

// ---------------------------------------------------------------------------
// Suite runners
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct IdentityReport {
    pub instances: usize,
    pub max_abs_residual: f64,
    pub tolerance: f64,
}

impl IdentityReport {
    pub fn pass(&self) -> bool {
        self.max_abs_residual < self.tolerance
    }
}

#[derive(Debug, Clone)]
pub struct ConstantRateReport {
    pub instances: usize,
    pub max_abs_residual: f64,
    pub max_abs_covariance: f64,
}

impl ConstantRateReport {
    pub fn pass(&self) -> bool {
        self.max_abs_residual < 1e-12 && self.max_abs_covariance < 1e-14
    }
}

#[derive(Debug, Clone)]
pub struct OptimalityReport {
    pub instances: usize,
    pub mismatches: usize,
}

impl OptimalityReport {
    pub fn pass(&self) -> bool {
        self.mismatches == 0
    }
}

#[derive(Debug, Clone)]
pub struct BoundReport {
    pub instances: usize,
    pub holds: usize,
    pub max_error: f64,
    pub min_slack: f64,
}

impl BoundReport {
    pub fn pass(&self) -> bool {
        self.holds == self.instances
    }
}

#[derive(Debug, Clone)]
pub struct TauRow {
    pub tau: f64,
    pub instances: usize,
    pub holds: usize,
    pub max_error: f64,
}

#[derive(Debug, Clone)]
pub struct TauReport {
    pub rows: Vec<TauRow>,
}

impl TauReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.holds == r.instances)
    }
}

#[derive(Debug, Clone)]
pub struct DownweightReport {
    pub instances: usize,
    pub max_abs_residual: f64,
    pub max_ratio_error: f64,
}

impl DownweightReport {
    pub fn pass(&self) -> bool {
        self.max_abs_residual < 1e-10 && self.max_ratio_error < 1e-12
    }
}

/// Binary decoupling identity over random worlds and classifiers.
pub fn binary_identity_suite(n: usize, m: usize, seed: u64) -> Result<IdentityReport> {
    let mut rng = substream(seed, rng::stream::SUITE);
    let mut max_abs: f64 = 0.0;
    for _ in 0..n {
        let inst = random_binary_instance(m, 0.0, 0.45, &mut rng);
        let f = random_classifier(&inst, &mut rng);
        max_abs = max_abs.max(decoupling_residual_binary(&inst, &f)?.abs());
    }
    Ok(IdentityReport {
        instances: n,
        max_abs_residual: max_abs,
        tolerance: 1e-10,
    })
}

/// Constant-rate special case: both covariance corrections vanish and the
/// identity reduces to the plain scaling invariance.
pub fn constant_rate_suite(n: usize, m: usize, seed: u64) -> Result<ConstantRateReport> {
    let mut rng = substream(seed, rng::stream::SUITE);
    let mut max_res: f64 = 0.0;
    let mut max_cov: f64 = 0.0;
    for _ in 0..n {
        let inst = random_constant_rate_instance(m, 0.45, &mut rng);
        let f = random_classifier(&inst, &mut rng);
        let bayes: Vec<usize> = inst.features.iter().map(|a| a.bayes_label).collect();
        let (c1, c2) = binary_covariances(&inst, &f, &bayes);
        max_cov = max_cov.max(c1.abs()).max(c2.abs());
        max_res = max_res.max(decoupling_residual_binary(&inst, &f)?.abs());
    }
    Ok(ConstantRateReport {
        instances: n,
        max_abs_residual: max_res,
        max_abs_covariance: max_cov,
    })
}

/// Multi-class decoupling identity over column-condition worlds.
pub fn multiclass_identity_suite(k: usize, n: usize, m: usize, seed: u64) -> Result<IdentityReport> {
    let mut rng = substream(seed, rng::stream::SUITE.wrapping_add(k as u64));
    let mut max_abs: f64 = 0.0;
    for _ in 0..n {
        let inst = random_multiclass_instance(k, m, &mut rng);
        let f = random_classifier(&inst, &mut rng);
        let out = decoupling_residual_multiclass(&inst, &f)?;
        max_abs = max_abs.max(out.residual.abs());
    }
    Ok(IdentityReport {
        instances: n,
        max_abs_residual: max_abs,
        tolerance: 1e-10,
    })
}

/// Two-population down-weighting identity with random class-dependent pairs.
pub fn downweight_suite(n: usize, m: usize, seed: u64) -> Result<DownweightReport> {
    let mut rng = substream(seed, rng::stream::SUITE);
    let mut max_res: f64 = 0.0;
    let mut max_ratio_err: f64 = 0.0;
    for _ in 0..n {
        let pop_i = random_constant_rate_instance(m, 0.4, &mut rng);
        let pop_ii = random_constant_rate_instance(m, 0.4, &mut rng);
        let f_i = random_classifier(&pop_i, &mut rng);
        let f_ii = random_classifier(&pop_ii, &mut rng);
        let mix = rng.random_range(0.05..0.95);
        let out = downweight_residual(&pop_i, &pop_ii, &f_i, &f_ii, mix)?;
        max_res = max_res.max(out.residual.abs());
        let expected_ratio = (1.0 - pop_ii.e_plus_at(0) - pop_ii.e_minus_at(0))
            / (1.0 - pop_i.e_plus_at(0) - pop_i.e_minus_at(0));
        max_ratio_err = max_ratio_err.max((out.weight_ratio - expected_ratio).abs());
    }
    Ok(DownweightReport {
        instances: n,
        max_abs_residual: max_res,
        max_ratio_error: max_ratio_err,
    })
}

/// Exhaustive peer minimizer on the Bayes world recovers the Bayes labels,
/// with no constraint on the class prior.
pub fn peer_optimality_suite(n: usize, m: usize, seed: u64) -> Result<OptimalityReport> {
    let mut rng = substream(seed, rng::stream::SUITE);
    let mut mismatches = 0;
    for _ in 0..n {
        let inst = random_prior_instance(m, 0.1, 0.9, 0.0, 0.45, &mut rng);
        let out = argmin_over_classifiers(&inst, &Objective::PeerOnBayes)?;
        let ok = inst
            .features
            .iter()
            .enumerate()
            .all(|(x, f)| f.px == 0.0 || out.minimizer.label(x) == f.bayes_label);
        if !ok || out.worst_tie_error != 0.0 {
            mismatches += 1;
        }
    }
    Ok(OptimalityReport {
        instances: n,
        mismatches,
    })
}

/// Exhaustive covariance-corrected minimizer recovers the Bayes labels on
/// random instance-dependent worlds.
pub fn cal_optimality_suite(n: usize, m: usize, seed: u64) -> Result<OptimalityReport> {
    let mut rng = substream(seed, rng::stream::SUITE);
    let mut mismatches = 0;
    for _ in 0..n {
        let inst = random_binary_instance_with_signal(m, 0.0, 0.45, 0.2, &mut rng);
        let out = argmin_over_classifiers(&inst, &Objective::CalPerfect)?;
        let ok = inst
            .features
            .iter()
            .enumerate()
            .all(|(x, f)| f.px == 0.0 || out.minimizer.label(x) == f.bayes_label);
        if !ok {
            mismatches += 1;
        }
    }
    Ok(OptimalityReport {
        instances: n,
        mismatches,
    })
}

/// Worst-case peer-loss bound over random worlds with bounded noise.
pub fn peer_bound_suite(n: usize, m: usize, seed: u64) -> Result<BoundReport> {
    let mut rng = substream(seed, rng::stream::SUITE);
    let mut holds = 0;
    let mut max_error: f64 = 0.0;
    let mut min_slack = f64::INFINITY;
    for _ in 0..n {
        let inst = random_binary_instance_with_signal(m, 0.0, 0.45, 0.2, &mut rng);
        let check = peer_bound_check(&inst)?;
        if check.holds {
            holds += 1;
        }
        max_error = max_error.max(check.error);
        min_slack = min_slack.min(check.bound - check.error);
    }
    Ok(BoundReport {
        instances: n,
        holds,
        max_error,
        min_slack,
    })
}

/// Imperfect-proxy bound across a grid of proxy qualities.
pub fn proxy_bound_suite(
    taus: &[f64],
    n: usize,
    m: usize,
    trials: usize,
    seed: u64,
) -> Result<TauReport> {
    let mut rows = Vec::with_capacity(taus.len());
    for (ti, &tau) in taus.iter().enumerate() {
        let mut rng = substream(seed, rng::stream::SUITE.wrapping_add(100 + ti as u64));
        let mut holds = 0;
        let mut max_error: f64 = 0.0;
        for _ in 0..n {
            let inst = random_balanced_tau_instance(m, &mut rng);
            let check = proxy_bound_check(&inst, tau, trials, &mut rng)?;
            if check.holds && !(tau == 1.0 && check.max_error != 0.0) {
                holds += 1;
            }
            max_error = max_error.max(check.max_error);
        }
        rows.push(TauRow {
            tau,
            instances: n,
            holds,
            max_error,
        });
    }
    Ok(TauReport { rows })
}
