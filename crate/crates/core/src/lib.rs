//! Counting magic squares and contingency tables by integrating over the
//! simplex of positive matrices.
//!
//! The count `|Σ(n,t)|` equals `∫ p·φ dμ` over the simplex of `n×n` matrices,
//! where `φ` is a power of the Sinkhorn scaling factor and `p` a normalised
//! permanent. This crate provides Sinkhorn scaling, exact permanents and bounds,
//! the densities, a hit-and-run sampler, the telescoping estimator, exact table
//! counts and closed-form reference formulas.

pub mod density;
pub mod error;
pub mod estimator;
pub mod exact;
pub mod formulas;
pub mod matrix;
pub mod numeric;
pub mod permanent;
pub mod report;
pub mod sampler;
pub mod scaling;

pub use density::ProblemSpec;
pub use error::{Error, Result};
pub use estimator::{build_schedule, estimate_count_full, estimate_count_simplified, FullParams, Schedule};
pub use exact::{exact_count, BigCount, Margins};
pub use matrix::{Matrix, SimplexMatrix};
pub use numeric::LogValue;
pub use report::{EstimateReport, SamplingParams};
