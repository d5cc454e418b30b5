//! Exact enumeration oracle over finite discrete worlds.
//!
//! Everything here is an exact finite sum: expectations, covariances,
//! exhaustive classifier search, and the identity/bound suites. This module
//! is the reference against which the sampled estimators elsewhere in the
//! crate are tested.

mod expectations;
mod instance;
mod search;
pub mod suites;

pub use expectations::{
    binary_covariances, decoupling_residual_binary, decoupling_residual_multiclass,
    downweight_residual, expected_01, expected_peer_01, DownweightCheck, MulticlassDecoupling,
    Target, COLUMN_CONDITION_TOL,
};
pub use instance::{
    class_of_pm1, pm1_of_class, FeatureAtom, FiniteInstance, NoiseStats, TabularClassifier, NEG,
    POS, PROB_TOL,
};
pub use search::{
    argmin_over_classifiers, peer_bound_check, proxy_bound_check, BoundCheck, Objective,
    SearchOutcome, ProxyBoundCheck, SEARCH_BUDGET, TIE_TOL,
};
