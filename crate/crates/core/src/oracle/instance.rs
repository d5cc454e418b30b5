//! Fully enumerated finite worlds: feature marginal, Bayes labels, and a
//! per-feature noise transition matrix.
//!
//! Binary problems use classes `{-1,+1}` externally, stored as indices
//! `{0,1}` with `-1 <-> 0`. All expectations over these worlds are exact
//! finite sums, which is what makes them usable as oracles for the
//! decoupling identities and bounds.

use crate::error::{CalError, Result};
use serde::{Deserialize, Serialize};

pub const PROB_TOL: f64 = 1e-12;

/// Index of the class that represents label `-1` in binary problems.
pub const NEG: usize = 0;
/// Index of the class that represents label `+1` in binary problems.
pub const POS: usize = 1;

/// Convert a `{-1,+1}` label to its class index.
pub fn class_of_pm1(label: i32) -> Result<usize> {
    match label {
        -1 => Ok(NEG),
        1 => Ok(POS),
        other => Err(CalError::invalid(format!(
            "binary label must be -1 or +1, got {other}"
        ))),
    }
}

/// Convert a binary class index to its `{-1,+1}` label.
pub fn pm1_of_class(class: usize) -> i32 {
    if class == POS {
        1
    } else {
        -1
    }
}

/// One feature atom of a finite world.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureAtom {
    pub id: usize,
    /// Marginal probability of this feature.
    pub px: f64,
    /// Bayes-optimal class index at this feature.
    pub bayes_label: usize,
    /// K×K transition rows: `transition[i][j] = P(noisy = j | bayes = i, x)`.
    pub transition: Vec<Vec<f64>>,
}

/// A fully enumerated joint world over finitely many features.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteInstance {
    pub num_classes: usize,
    pub features: Vec<FeatureAtom>,
}

impl FiniteInstance {
    /// Validate and build. Checks the simplex and row-stochastic invariants.
    pub fn new(num_classes: usize, features: Vec<FeatureAtom>) -> Result<Self> {
        let inst = FiniteInstance {
            num_classes,
            features,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Binary world from per-feature error rates.
    ///
    /// `e_plus[x] = P(noisy = -1 | bayes = +1, x)` and
    /// `e_minus[x] = P(noisy = +1 | bayes = -1, x)`; `bayes_pm1` carries
    /// labels in `{-1,+1}`.
    pub fn binary(
        px: &[f64],
        bayes_pm1: &[i32],
        e_plus: &[f64],
        e_minus: &[f64],
    ) -> Result<Self> {
        let m = px.len();
        if bayes_pm1.len() != m || e_plus.len() != m || e_minus.len() != m {
            return Err(CalError::invalid("px, labels and rates must have equal length"));
        }
        let features = (0..m)
            .map(|x| {
                Ok(FeatureAtom {
                    id: x,
                    px: px[x],
                    bayes_label: class_of_pm1(bayes_pm1[x])?,
                    // row NEG: stays -1 w.p. 1-e_minus, flips to +1 w.p. e_minus
                    // row POS: flips to -1 w.p. e_plus, stays +1 w.p. 1-e_plus
                    transition: vec![
                        vec![1.0 - e_minus[x], e_minus[x]],
                        vec![e_plus[x], 1.0 - e_plus[x]],
                    ],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        FiniteInstance::new(2, features)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(CalError::invalid("need at least 2 classes"));
        }
        if self.features.is_empty() {
            return Err(CalError::invalid("instance has no features"));
        }
        let k = self.num_classes;
        let mass: f64 = self.features.iter().map(|f| f.px).sum();
        if (mass - 1.0).abs() > PROB_TOL {
            return Err(CalError::invalid(format!(
                "feature probabilities sum to {mass}, not 1"
            )));
        }
        for f in &self.features {
            if !(0.0..=1.0).contains(&f.px) {
                return Err(CalError::invalid(format!("px out of [0,1] at feature {}", f.id)));
            }
            if f.bayes_label >= k {
                return Err(CalError::invalid(format!(
                    "bayes label {} out of range at feature {}",
                    f.bayes_label, f.id
                )));
            }
            if f.transition.len() != k {
                return Err(CalError::invalid(format!(
                    "transition must have {k} rows at feature {}",
                    f.id
                )));
            }
            for (i, row) in f.transition.iter().enumerate() {
                if row.len() != k {
                    return Err(CalError::invalid(format!(
                        "transition row {i} must have {k} entries at feature {}",
                        f.id
                    )));
                }
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(CalError::invalid(format!(
                        "transition entries out of [0,1] at feature {}",
                        f.id
                    )));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > PROB_TOL {
                    return Err(CalError::invalid(format!(
                        "transition row {i} sums to {s} at feature {}",
                        f.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    /// `P(noisy = j | x)`, driven by the Bayes row of the feature's matrix.
    pub fn noisy_given_x(&self, x: usize, j: usize) -> f64 {
        let f = &self.features[x];
        f.transition[f.bayes_label][j]
    }

    /// Marginal of the Bayes label.
    pub fn bayes_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.num_classes];
        for f in &self.features {
            m[f.bayes_label] += f.px;
        }
        m
    }

    /// Marginal of the noisy label.
    pub fn noisy_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.num_classes];
        for f in &self.features {
            for j in 0..self.num_classes {
                m[j] += f.px * f.transition[f.bayes_label][j];
            }
        }
        m
    }

    /// `e_plus(x)`: flip rate off the positive class (binary only).
    pub fn e_plus_at(&self, x: usize) -> f64 {
        self.features[x].transition[POS][NEG]
    }

    /// `e_minus(x)`: flip rate off the negative class (binary only).
    pub fn e_minus_at(&self, x: usize) -> f64 {
        self.features[x].transition[NEG][POS]
    }

    pub fn is_binary(&self) -> bool {
        self.num_classes == 2
    }

    /// Expected transition matrix over the feature marginal.
    pub fn expected_transition(&self) -> Vec<Vec<f64>> {
        let k = self.num_classes;
        let mut t = vec![vec![0.0; k]; k];
        for f in &self.features {
            for i in 0..k {
                for j in 0..k {
                    t[i][j] += f.px * f.transition[i][j];
                }
            }
        }
        t
    }

    /// Aggregate noise statistics used by the decoupling identities.
    pub fn noise_stats(&self) -> NoiseStats {
        let k = self.num_classes;
        let m = self.num_features();
        let mut stats = NoiseStats {
            e_plus: 0.0,
            e_minus: 0.0,
            eps_plus: 0.0,
            eps_minus: 0.0,
            p_star: 0.0,
            z1: vec![0.0; m],
            z2: vec![0.0; m],
            t_bar: self.expected_transition(),
        };
        if k == 2 {
            for (x, f) in self.features.iter().enumerate() {
                let ep = self.e_plus_at(x);
                let em = self.e_minus_at(x);
                stats.e_plus += f.px * ep;
                stats.e_minus += f.px * em;
                stats.z1[x] = 1.0 - ep - em;
                stats.z2[x] = ep - em;
                if f.bayes_label == POS {
                    stats.p_star += f.px;
                }
            }
            for (x, f) in self.features.iter().enumerate() {
                stats.eps_plus += f.px * (self.e_plus_at(x) - stats.e_plus).abs();
                stats.eps_minus += f.px * (self.e_minus_at(x) - stats.e_minus).abs();
            }
        }
        stats
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let inst: FiniteInstance = serde_json::from_str(s)?;
        inst.validate()?;
        Ok(inst)
    }
}

/// Deterministic labeling of every feature in a finite world.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TabularClassifier {
    pub labels: Vec<usize>,
}

impl TabularClassifier {
    pub fn new(labels: Vec<usize>) -> Self {
        TabularClassifier { labels }
    }

    /// The classifier that outputs the Bayes label everywhere.
    pub fn bayes(inst: &FiniteInstance) -> Self {
        TabularClassifier {
            labels: inst.features.iter().map(|f| f.bayes_label).collect(),
        }
    }

    pub fn label(&self, x: usize) -> usize {
        self.labels[x]
    }

    pub fn check_against(&self, inst: &FiniteInstance) -> Result<()> {
        if self.labels.len() != inst.num_features() {
            return Err(CalError::invalid("classifier does not cover every feature"));
        }
        if self.labels.iter().any(|&c| c >= inst.num_classes) {
            return Err(CalError::invalid("classifier label out of class range"));
        }
        Ok(())
    }

    /// Disagreement with the Bayes labels, weighted by the feature marginal.
    pub fn bayes_error(&self, inst: &FiniteInstance) -> f64 {
        let err: f64 = inst
            .features
            .iter()
            .enumerate()
            .filter(|(x, f)| self.labels[*x] != f.bayes_label)
            .map(|(_, f)| f.px)
            .sum();
        // An empty sum is -0.0; keep reported errors sign-clean.
        err.abs()
    }
}

/// Aggregates of the noise-rate random variables for a binary world.
///
/// `z1[x] = 1 - e_plus(x) - e_minus(x)` and `z2[x] = e_plus(x) - e_minus(x)`
/// are the carriers of the two covariance corrections; `eps_plus`/`eps_minus`
/// are mean absolute deviations of the rates.
#[derive(Debug, Clone)]
pub struct NoiseStats {
    pub e_plus: f64,
    pub e_minus: f64,
    pub eps_plus: f64,
    pub eps_minus: f64,
    pub p_star: f64,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub t_bar: Vec<Vec<f64>>,
}

impl NoiseStats {
    pub fn z1_mean(&self) -> f64 {
        1.0 - self.e_plus - self.e_minus
    }

    pub fn z2_mean(&self) -> f64 {
        self.e_plus - self.e_minus
    }
}
