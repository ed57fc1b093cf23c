//! Dual-representation φ-divergence estimation and testing for parametric models.
//!
//! Modules, bottom-up:
//!
//! * [`divergence`]: convex generators φ (the power family and custom ones),
//!   their derivatives and Fenchel conjugates.
//! * [`numerics`]: quadrature, box-constrained maximization, nested min-max
//!   search, χ² and normal distribution functions, ECDF distances.
//! * [`model`]: parametric families with densities, scores, samplers and
//!   Fisher information, including mixtures with a signed-weight extension.
//! * [`dual`]: the kernels `f`, `g`, `h` and the empirical and population
//!   dual objectives `P h(θ, α)`.
//! * [`estimate`]: dual estimators `α̂(θ)`, min-max estimators `θ̂`,
//!   constrained estimates and asymptotic covariances.
//! * [`infer`]: divergence tests, likelihood-ratio statistics, the power
//!   approximation with sample-size planning, and the dual χ² machinery for
//!   mixtures.
//! * [`simulate`]: seeded Monte Carlo replication.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod divergence;
pub mod dual;
pub mod error;
pub mod estimate;
pub mod infer;
pub mod model;
pub mod numerics;
pub mod simulate;

pub use divergence::{Divergence, DivergenceConfig, PhiValue};
pub use dual::{DualObjective, Kernels};
pub use error::{Error, Result};
pub use estimate::{ConstraintSpec, EstimateMode, EstimateOptions, EstimateResult};
pub use infer::{PowerPlan, TestReport};
pub use model::{ModelConfig, ParamBox, ParametricModel, Sample};
pub use numerics::{OptimizeOptions, OptimizeReport};
