//! Linear-space approximation of semi-values.
//!
//! A semi-value assigns each of `n` players the weighted average of its
//! marginal contributions, with weights `p_s` depending only on coalition
//! size. Shapley, (weighted) Banzhaf and Beta Shapley values are all
//! semi-values. This crate estimates them from a budget of utility queries
//! while holding only `O(n)` floats of state:
//!
//! * [`weights`] builds the weight vectors `p`, `m` and the size
//!   distributions (`q*`, the MSR variant, kernelSHAP and SHAP-IQ choices)
//!   together with the dispersion constant `D(q)` that governs both error
//!   and query complexity.
//! * [`games`] provides utility oracles with query counting and a set of
//!   synthetic games with exact ground truth.
//! * [`exact`] enumerates all `2^n` coalitions for ground truth, moments and
//!   closed-form MSE predictions.
//! * [`sampling`] draws coalition streams (i.i.d. or paired).
//! * [`estimators`] holds the streaming estimators, including the adaptive
//!   control-variate estimators Adalina and Adalina-All.
//! * [`experiment`] is the benchmark harness behind the `semival` CLI.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coalition;
pub mod error;
pub mod estimators;
pub mod exact;
pub mod experiment;
pub mod games;
pub mod sampling;
pub mod weights;

pub use coalition::Coalition;
pub use error::{Error, Result};
pub use estimators::{
    Endpoints, Estimate, EstimateMeta, Estimator, EstimatorDescriptor, EstimatorKind,
    KernelVariant,
};
pub use exact::{exact_semivalue, ExactReport};
pub use games::{Game, UtilityOracle};
pub use sampling::{CoalitionStream, RandomSource, SamplingPlan};
pub use weights::{Family, SemiValueSpec, SizeDistribution, ZCoefficients};
