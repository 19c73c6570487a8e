//! Slow but obviously correct reference implementations plus randomized
//! fixture generators, used by the test suites of the other crates. Nothing
//! here shares code with the optimized paths it checks.

pub mod fixtures;
pub mod reference;
