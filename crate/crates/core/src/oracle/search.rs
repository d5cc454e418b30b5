//! Exhaustive search over tabular classifiers and the worst-case bound checks
//! built on top of it.

use crate::error::{CalError, Result};
use crate::oracle::instance::{FiniteInstance, TabularClassifier, NEG};
use rand::Rng;

/// Hard cap on the number of classifiers an exhaustive search may visit.
pub const SEARCH_BUDGET: u64 = 1 << 20;

/// Objective tolerance below which two classifiers count as tied minimizers.
pub const TIE_TOL: f64 = 1e-12;

/// Objectives that the exhaustive search can minimize. All of them are exact
/// expectations over the finite world.
#[derive(Debug, Clone)]
pub enum Objective<'a> {
    /// Expected 0-1 peer loss on the Bayes-optimal world.
    PeerOnBayes,
    /// Expected 0-1 peer loss on the noisy world.
    PeerOnNoisy,
    /// Noisy peer loss minus both covariance corrections computed from the
    /// true Bayes assignment.
    CalPerfect,
    /// Noisy peer loss minus covariance corrections computed from an
    /// imperfect per-feature label assignment.
    CalTau(&'a [usize]),
}

/// Per-feature additive cost table: every supported objective decomposes as
/// `sum_x cost[x][f(x)]`, because the peer and covariance terms only couple
/// features through f-independent marginals.
fn cost_table(inst: &FiniteInstance, objective: &Objective) -> Result<Vec<Vec<f64>>> {
    let k = inst.num_classes;
    let m = inst.num_features();
    let mut cost = vec![vec![0.0; k]; m];
    match objective {
        Objective::PeerOnBayes => {
            let marginal = inst.bayes_marginal();
            for (x, feat) in inst.features.iter().enumerate() {
                for c in 0..k {
                    let own = if c != feat.bayes_label { 1.0 } else { 0.0 };
                    cost[x][c] = feat.px * (own - (1.0 - marginal[c]));
                }
            }
        }
        Objective::PeerOnNoisy => {
            let marginal = inst.noisy_marginal();
            for (x, feat) in inst.features.iter().enumerate() {
                for c in 0..k {
                    cost[x][c] =
                        feat.px * ((1.0 - inst.noisy_given_x(x, c)) - (1.0 - marginal[c]));
                }
            }
        }
        Objective::CalPerfect | Objective::CalTau(_) => {
            if !inst.is_binary() {
                return Err(CalError::invalid(
                    "covariance-corrected objectives are defined for K = 2",
                ));
            }
            let assignment: Vec<usize> = match objective {
                Objective::CalTau(a) => {
                    if a.len() != m {
                        return Err(CalError::invalid(
                            "assignment must label every feature",
                        ));
                    }
                    a.to_vec()
                }
                _ => inst.features.iter().map(|f| f.bayes_label).collect(),
            };
            let marginal = inst.noisy_marginal();
            let stats = inst.noise_stats();
            let z1_mean = stats.z1_mean();
            let z2_mean = stats.z2_mean();
            for (x, feat) in inst.features.iter().enumerate() {
                for c in 0..k {
                    let peer =
                        feat.px * ((1.0 - inst.noisy_given_x(x, c)) - (1.0 - marginal[c]));
                    let cov1 = feat.px
                        * (stats.z1[x] - z1_mean)
                        * if c != assignment[x] { 1.0 } else { 0.0 };
                    let cov2 =
                        feat.px * (stats.z2[x] - z2_mean) * if c != NEG { 1.0 } else { 0.0 };
                    cost[x][c] = peer - cov1 - cov2;
                }
            }
        }
    }
    Ok(cost)
}

fn check_budget(inst: &FiniteInstance) -> Result<u64> {
    let k = inst.num_classes as u64;
    let m = inst.num_features() as u32;
    let total = k
        .checked_pow(m)
        .filter(|&t| t <= SEARCH_BUDGET)
        .ok_or_else(|| {
            CalError::ResourceLimit(format!(
                "{}^{} classifiers exceed the search budget of {}",
                inst.num_classes,
                inst.num_features(),
                SEARCH_BUDGET
            ))
        })?;
    Ok(total)
}

fn objective_of(index: u64, k: u64, cost: &[Vec<f64>]) -> f64 {
    let mut value = 0.0;
    let mut rest = index;
    for row in cost {
        value += row[(rest % k) as usize];
        rest /= k;
    }
    value
}

fn decode(index: u64, k: u64, m: usize) -> Vec<usize> {
    let mut labels = Vec::with_capacity(m);
    let mut rest = index;
    for _ in 0..m {
        labels.push((rest % k) as usize);
        rest /= k;
    }
    labels
}

/// Search outcome: a global minimizer plus the worst Bayes error attained by
/// any classifier tied (within [`TIE_TOL`]) with the optimum. Worst-case
/// bounds must hold for every argmin, so ties are resolved pessimistically in
/// `worst_tie_error`; the representative `minimizer` is the tied classifier
/// with the smallest Bayes error (first in enumeration order on equality).
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub minimizer: TabularClassifier,
    pub value: f64,
    pub worst_tie_error: f64,
    pub num_ties: usize,
}

/// Enumerate every tabular classifier and minimize `objective` exactly.
pub fn argmin_over_classifiers(
    inst: &FiniteInstance,
    objective: &Objective,
) -> Result<SearchOutcome> {
    let total = check_budget(inst)?;
    let cost = cost_table(inst, objective)?;
    let k = inst.num_classes as u64;
    let m = inst.num_features();

    let mut best = f64::INFINITY;
    for index in 0..total {
        let v = objective_of(index, k, &cost);
        if v < best {
            best = v;
        }
    }

    // Second pass over the same enumeration collects the tie set.
    let mut worst_tie_error: f64 = 0.0;
    let mut best_tie_error = f64::INFINITY;
    let mut best_index = 0u64;
    let mut num_ties = 0usize;
    for index in 0..total {
        let v = objective_of(index, k, &cost);
        if v <= best + TIE_TOL {
            num_ties += 1;
            let f = TabularClassifier::new(decode(index, k, m));
            let err = f.bayes_error(inst);
            worst_tie_error = worst_tie_error.max(err);
            if err < best_tie_error {
                best_tie_error = err;
                best_index = index;
            }
        }
    }

    Ok(SearchOutcome {
        minimizer: TabularClassifier::new(decode(best_index, k, m)),
        value: best,
        worst_tie_error,
        num_ties,
    })
}

/// Result of checking one of the worst-case performance bounds.
#[derive(Debug, Clone)]
pub struct BoundCheck {
    pub error: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Worst-case performance of the peer-loss minimizer learned from the noisy
/// world: Bayes error of the worst tied argmin against
/// `2 (eps+ + eps-) / (1 - e+ - e-) + 2 |p* - 0.5|`.
pub fn peer_bound_check(inst: &FiniteInstance) -> Result<BoundCheck> {
    if !inst.is_binary() {
        return Err(CalError::invalid("peer-loss bound check requires K = 2"));
    }
    let stats = inst.noise_stats();
    if stats.z1_mean() <= 0.0 {
        return Err(CalError::precondition(
            "bound requires 1 - e+ - e- > 0",
        ));
    }
    let outcome = argmin_over_classifiers(inst, &Objective::PeerOnNoisy)?;
    let bound = 2.0 * (stats.eps_plus + stats.eps_minus) / stats.z1_mean()
        + 2.0 * (stats.p_star - 0.5).abs();
    Ok(BoundCheck {
        error: outcome.worst_tie_error,
        bound,
        holds: outcome.worst_tie_error <= bound + 1e-12,
    })
}

/// Result of the imperfect-proxy bound check over repeated random corruptions.
#[derive(Debug, Clone)]
pub struct ProxyBoundCheck {
    pub max_error: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Worst-case performance of the covariance-corrected minimizer when the
/// corrections come from a proxy assignment that matches the Bayes labels
/// only with probability `tau` per feature. Checks
/// `max error <= 4 (1 - tau)(eps+ + eps-) / (1 - e+ - e-)`, stated for
/// balanced worlds (`p* = 0.5`).
pub fn proxy_bound_check(
    inst: &FiniteInstance,
    tau: f64,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<ProxyBoundCheck> {
    if !inst.is_binary() {
        return Err(CalError::invalid("imperfect-proxy bound check requires K = 2"));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(CalError::invalid("tau must lie in [0,1]"));
    }
    let stats = inst.noise_stats();
    if (stats.p_star - 0.5).abs() > 1e-9 {
        return Err(CalError::precondition(format!(
            "bound is stated for p* = 0.5, got {}",
            stats.p_star
        )));
    }
    if stats.z1_mean() <= 0.0 {
        return Err(CalError::precondition(
            "bound requires 1 - e+ - e- > 0",
        ));
    }

    let mut max_error: f64 = 0.0;
    for _ in 0..trials {
        let assignment: Vec<usize> = inst
            .features
            .iter()
            .map(|f| {
                if tau >= 1.0 || rng.random::<f64>() < tau {
                    f.bayes_label
                } else {
                    1 - f.bayes_label
                }
            })
            .collect();
        let outcome = argmin_over_classifiers(inst, &Objective::CalTau(&assignment))?;
        max_error = max_error.max(outcome.worst_tie_error);
    }
    let bound = 4.0 * (1.0 - tau) * (stats.eps_plus + stats.eps_minus) / stats.z1_mean();
    Ok(ProxyBoundCheck {
        max_error,
        bound,
        holds: max_error <= bound + 1e-12,
    })
}
