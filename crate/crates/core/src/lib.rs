//! Shrinkage M-estimation of scatter matrices.
//!
//! Robust scatter/covariance estimation that couples an M-estimator of
//! scatter (Gaussian, Huber, or t weights) with eigenvalue shrinkage toward
//! the grand mean, and picks the shrinkage parameter by a closed-form
//! minimum-MSE rule derived under elliptical sampling. Includes the
//! population-side machinery (elliptical samplers, scale-equation solver,
//! sphericity/kurtosis oracles) and a Monte-Carlo harness that scores the
//! estimators by normalized MSE against their population targets.

pub mod elliptical;
pub mod error;
pub mod mestimator;
pub mod shrinkage;
pub mod simharness;
pub mod specialfn;
pub mod weights;

pub use elliptical::{EllipticalModel, Family};
pub use error::{Error, Result};
pub use mestimator::{DataSample, ScatterMatrix, SolveReport};
pub use shrinkage::{estimate, EstimateOptions, Method, ShrinkageEstimate};
pub use simharness::{run_experiment, ExperimentConfig, ExperimentResult};
pub use weights::WeightSpec;
