//! Timing-offset estimators: exact maximum likelihood over permutation sums,
//! linear unbiased estimation from sorted-arrival statistics, its iterative
//! per-symbol refinement, and blind/decision-feedback variants that work
//! without training data.

pub mod blind;
pub mod iule;
pub mod likelihood;
pub mod ule;
