//! Two-stage interpretable matching (TIM) for observational causal inference.
//!
//! The pipeline matches treated to control units in two stages and reports
//! effect estimates together with balance diagnostics:
//!
//! 1. **Importance ordering** — twin regressions (outcome OLS, treatment
//!    logistic) on coarsened covariates yield a per-covariate importance
//!    score used to rank covariates.
//! 2. **Iterative exact matching** — units are grouped on exact equality of
//!    coarsened covariate signatures; the least important covariate is
//!    dropped each round so hard-to-match units still land in a stratum.
//! 3. **Refinement** — within each stratum, controls are scored by a mixed
//!    continuous/discrete distance to the treated units and the scores are
//!    converted to observation weights.
//! 4. **Estimation and diagnostics** — weighted conditional effect estimates
//!    per stratum, plus multivariate L1 imbalance before and after matching.
//!
//! [`pipeline::run_match`] wires the stages together; each stage is also
//! usable on its own.

pub mod dataset;
pub mod distance;
pub mod error;
pub mod estimator;
pub mod imbalance;
pub mod importance;
pub mod matcher;
pub mod pipeline;
pub mod refine;
pub mod report;
pub mod simulate;

pub use dataset::{ColumnSpec, CovariateKind, Dataset};
pub use error::{Error, Result};
