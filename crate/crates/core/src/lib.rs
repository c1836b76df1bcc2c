//! Varying-coefficient regression for longitudinal data whose covariates are
//! observed partly at the response times (synchronous) and partly on their
//! own schedule (asynchronous).
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`.

pub mod bandwidth;
pub mod data;
pub mod error;
pub mod estimators;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod scalar;
pub mod scb;
pub mod simulation;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset = data::LongitudinalDataset<f64>;
pub type Subject = data::SubjectRecord<f64>;
pub type Estimate = estimators::CoefficientEstimate<f64>;
pub type Curve = estimators::CurveEstimate<f64>;
