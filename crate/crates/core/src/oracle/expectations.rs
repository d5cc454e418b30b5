//! Exact expectations of 0-1 and peer 0-1 losses over finite worlds, and the
//! decoupling residuals built from them.

use crate::error::{CalError, Result};
use crate::oracle::instance::{FiniteInstance, TabularClassifier, NEG};

/// Which label variable the 0-1 loss compares against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// The Bayes-optimal label.
    Bayes,
    /// The noisy label.
    Noisy,
    /// A fixed class index.
    Constant(usize),
}

/// Exact `E[1{f(X) != target}]` by full enumeration.
pub fn expected_01(
    inst: &FiniteInstance,
    f: &TabularClassifier,
    target: Target,
) -> Result<f64> {
    f.check_against(inst)?;
    match target {
        Target::Bayes => Ok(f.bayes_error(inst)),
        Target::Noisy => {
            let mut total = 0.0;
            for (x, feat) in inst.features.iter().enumerate() {
                let fx = f.label(x);
                // P(noisy != fx | x) = 1 - P(noisy = fx | x)
                total += feat.px * (1.0 - inst.noisy_given_x(x, fx));
            }
            Ok(total)
        }
        Target::Constant(c) => {
            if c >= inst.num_classes {
                return Err(CalError::invalid(format!(
                    "constant class {c} out of range [0,{})",
                    inst.num_classes
                )));
            }
            Ok(inst
                .features
                .iter()
                .enumerate()
                .filter(|(x, _)| f.label(*x) != c)
                .map(|(_, feat)| feat.px)
                .sum())
        }
    }
}

/// Exact expected 0-1 peer loss: `E[1{f(X) != Y}] - E_{X1} E_{Y2} [1{f(X1) != Y2}]`
/// with the peer feature and peer label drawn from independent marginals.
///
/// `Target::Bayes` evaluates the peer loss on the Bayes-optimal world,
/// `Target::Noisy` on the noisy one.
pub fn expected_peer_01(
    inst: &FiniteInstance,
    f: &TabularClassifier,
    target: Target,
) -> Result<f64> {
    let (first, label_marginal) = match target {
        Target::Bayes => (expected_01(inst, f, Target::Bayes)?, inst.bayes_marginal()),
        Target::Noisy => (expected_01(inst, f, Target::Noisy)?, inst.noisy_marginal()),
        Target::Constant(_) => {
            return Err(CalError::invalid(
                "peer loss is defined for bayes or noisy targets only",
            ))
        }
    };
    let mut peer = 0.0;
    for (j, pj) in label_marginal.iter().enumerate() {
        if *pj == 0.0 {
            continue;
        }
        peer += pj * expected_01(inst, f, Target::Constant(j))?;
    }
    Ok(first - peer)
}

/// Exact `Cov(a(X), b(X))` over the feature marginal, in `E[(A-E[A])(B-E[B])]` form.
fn cov_over_px(inst: &FiniteInstance, a: &[f64], b: impl Fn(usize) -> f64) -> f64 {
    let mean_a: f64 = inst
        .features
        .iter()
        .enumerate()
        .map(|(x, feat)| feat.px * a[x])
        .sum();
    let mean_b: f64 = inst
        .features
        .iter()
        .enumerate()
        .map(|(x, feat)| feat.px * b(x))
        .sum();
    inst.features
        .iter()
        .enumerate()
        .map(|(x, feat)| feat.px * (a[x] - mean_a) * (b(x) - mean_b))
        .sum()
}

/// The two covariance corrections of the binary decoupling identity,
/// evaluated against an arbitrary per-feature label assignment (the
/// Bayes assignment recovers the ideal corrections).
pub fn binary_covariances(
    inst: &FiniteInstance,
    f: &TabularClassifier,
    assignment: &[usize],
) -> (f64, f64) {
    let stats = inst.noise_stats();
    let cov1 = cov_over_px(inst, &stats.z1, |x| {
        if f.label(x) != assignment[x] {
            1.0
        } else {
            0.0
        }
    });
    let cov2 = cov_over_px(inst, &stats.z2, |x| {
        if f.label(x) != NEG {
            1.0
        } else {
            0.0
        }
    });
    (cov1, cov2)
}

/// LHS minus RHS of the binary decoupling identity
///
/// ```text
/// E_noisy[peer01(f)] = (1 - e+ - e-) E_bayes[peer01(f)]
///                    + Cov(Z1(X), 1{f(X) != Y*})
///                    + Cov(Z2(X), 1{f(X) != -1})
/// ```
///
/// which is an exact identity for every binary world and classifier.
pub fn decoupling_residual_binary(
    inst: &FiniteInstance,
    f: &TabularClassifier,
) -> Result<f64> {
    if !inst.is_binary() {
        return Err(CalError::invalid("binary decoupling requires K = 2"));
    }
    f.check_against(inst)?;
    let lhs = expected_peer_01(inst, f, Target::Noisy)?;
    let peer_star = expected_peer_01(inst, f, Target::Bayes)?;
    let stats = inst.noise_stats();
    let bayes_assign: Vec<usize> = inst.features.iter().map(|a| a.bayes_label).collect();
    let (cov1, cov2) = binary_covariances(inst, f, &bayes_assign);
    Ok(lhs - (stats.z1_mean() * peer_star + cov1 + cov2))
}

/// Outcome of the multi-class decoupling check.
#[derive(Debug, Clone)]
pub struct MulticlassDecoupling {
    pub residual: f64,
    /// Per-class off-diagonal column rates implied by the expected matrix.
    pub class_rates: Vec<f64>,
    /// Sum over classes of the conditional covariance corrections.
    pub covariance_sum: f64,
}

/// Column-uniformity tolerance for the expected transition matrix.
pub const COLUMN_CONDITION_TOL: f64 = 1e-9;

/// LHS minus RHS of the multi-class decoupling identity. Requires the
/// expected transition matrix to have column-constant off-diagonal entries
/// (`T[i][j] = e_j` for all `i != j`); per-feature matrices are free.
pub fn decoupling_residual_multiclass(
    inst: &FiniteInstance,
    f: &TabularClassifier,
) -> Result<MulticlassDecoupling> {
    f.check_against(inst)?;
    let k = inst.num_classes;
    let t_bar = inst.expected_transition();

    // Column condition on the expected matrix.
    let mut class_rates = vec![0.0; k];
    let mut max_dev: f64 = 0.0;
    for j in 0..k {
        let off: Vec<f64> = (0..k).filter(|&i| i != j).map(|i| t_bar[i][j]).collect();
        let mean = off.iter().sum::<f64>() / off.len() as f64;
        for v in &off {
            max_dev = max_dev.max((v - mean).abs());
        }
        class_rates[j] = mean;
    }
    if max_dev > COLUMN_CONDITION_TOL {
        return Err(CalError::precondition(format!(
            "expected transition matrix violates the off-diagonal column condition \
             (max deviation {max_dev:.3e})"
        )));
    }

    let lhs = expected_peer_01(inst, f, Target::Noisy)?;
    let peer_star = expected_peer_01(inst, f, Target::Bayes)?;
    let rate_sum: f64 = class_rates.iter().sum();

    // Sum_j E_{Y*}[ Cov_{X|Y*}( T_{Y*,j}(X), 1{f(X) != j} ) ]
    let bayes_marginal = inst.bayes_marginal();
    let mut covariance_sum = 0.0;
    for i in 0..k {
        let pi = bayes_marginal[i];
        if pi == 0.0 {
            continue;
        }
        for j in 0..k {
            let mut mean_t = 0.0;
            let mut mean_l = 0.0;
            for (x, feat) in inst.features.iter().enumerate() {
                if feat.bayes_label != i {
                    continue;
                }
                let w = feat.px / pi;
                mean_t += w * feat.transition[i][j];
                mean_l += w * if f.label(x) != j { 1.0 } else { 0.0 };
            }
            let mut cov = 0.0;
            for (x, feat) in inst.features.iter().enumerate() {
                if feat.bayes_label != i {
                    continue;
                }
                let w = feat.px / pi;
                let l = if f.label(x) != j { 1.0 } else { 0.0 };
                cov += w * (feat.transition[i][j] - mean_t) * (l - mean_l);
            }
            covariance_sum += pi * cov;
        }
    }

    Ok(MulticlassDecoupling {
        residual: lhs - ((1.0 - rate_sum) * peer_star + covariance_sum),
        class_rates,
        covariance_sum,
    })
}

/// Result of the two-population down-weighting check.
#[derive(Debug, Clone)]
pub struct DownweightCheck {
    pub residual: f64,
    /// `(1 - e+_II - e-_II) / (1 - e+_I - e-_I)`: the implicit weight put on
    /// the noisier population.
    pub weight_ratio: f64,
}

const CONSTANT_RATE_TOL: f64 = 1e-12;

fn constant_rates(inst: &FiniteInstance) -> Result<(f64, f64)> {
    if !inst.is_binary() {
        return Err(CalError::invalid("down-weighting check requires K = 2"));
    }
    let ep = inst.e_plus_at(0);
    let em = inst.e_minus_at(0);
    for x in 0..inst.num_features() {
        if (inst.e_plus_at(x) - ep).abs() > CONSTANT_RATE_TOL
            || (inst.e_minus_at(x) - em).abs() > CONSTANT_RATE_TOL
        {
            return Err(CalError::invalid(
                "sub-population rates must be constant across features",
            ));
        }
    }
    Ok((ep, em))
}

/// LHS minus RHS of the two-population down-weighting identity: a mixture of
/// two class-dependent populations weighs the second population's Bayes risk
/// by the ratio of the populations' signal rates. Both sides evaluate each
/// population's peer loss within that population.
pub fn downweight_residual(
    pop_i: &FiniteInstance,
    pop_ii: &FiniteInstance,
    f_i: &TabularClassifier,
    f_ii: &TabularClassifier,
    mix: f64,
) -> Result<DownweightCheck> {
    if !(0.0 < mix && mix < 1.0) {
        return Err(CalError::invalid("mix must lie strictly inside (0,1)"));
    }
    let (ep_i, em_i) = constant_rates(pop_i)?;
    let (ep_ii, em_ii) = constant_rates(pop_ii)?;
    let z_i = 1.0 - ep_i - em_i;
    let z_ii = 1.0 - ep_ii - em_ii;
    if z_i <= 0.0 {
        return Err(CalError::precondition(
            "population I must have 1 - e+ - e- > 0",
        ));
    }
    let weight_ratio = z_ii / z_i;

    let lhs = mix * expected_peer_01(pop_i, f_i, Target::Noisy)?
        + (1.0 - mix) * expected_peer_01(pop_ii, f_ii, Target::Noisy)?;
    let rhs = z_i
        * (mix * expected_peer_01(pop_i, f_i, Target::Bayes)?
            + weight_ratio * (1.0 - mix) * expected_peer_01(pop_ii, f_ii, Target::Bayes)?);
    Ok(DownweightCheck {
        residual: lhs - rhs,
        weight_ratio,
    })
}
