//! Switchback experiments under carryover effects: minimax-optimal
//! randomization schedules, Horvitz-Thompson estimation of lag-p effects,
//! and randomization-based or asymptotic inference.
//!
//! Periods are 1-indexed everywhere.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// `is_multiple_of` is newer than the minimum supported toolchain.
#![allow(clippy::manual_is_multiple_of)]

pub mod design;
pub mod error;
pub mod estimation;
pub mod inference;
pub mod optimal;
pub mod outcomes;
pub mod rng;
pub mod study;

pub use design::{validate_design, AssignmentPath, Design, RandomizationOutcome, DEFAULT_ENUMERATION_CAP};
pub use error::{Error, Result};
pub use outcomes::{
    design_conditional_estimand, lag_p_estimand, misspecified_estimand, realize_observed, total_effect,
    worst_case_outcomes, Alpha, AlphaKind, AutoregressiveModel, LinearCarryoverModel, ModelConfig,
    PotentialOutcomeOracle, Sign, WorstCaseOutcomes,
};
pub use estimation::{
    enumerate_estimates, enumeration_moments, ht_estimator, ht_estimator_total, propensity, variance_bounds,
    variance_estimates, variance_exact, variance_pairwise, Arm, ExperimentData, HtKernel,
};
pub use optimal::{
    optimal_design, optimal_design_bruteforce, risk_enumeration, risk_monte_carlo, subset_selection_objective,
    worst_case_risk_closed_form, GapProfile, RiskMethod, RiskReport,
};
pub use inference::{
    analyze, asymptotic_test, exact_ci, exact_test, exact_test_shifted, identify_m_search, identify_m_subroutine,
    normal_ci, AnalysisReport, ConfidenceInterval, ExactTestConfig, ExperimentSummary, IdentifyOutcome, PairTest,
    TestMethod, TestResult,
};
pub use study::{run_study, Benchmark, Specification, StudyConfig, StudyKind, StudyResult};
