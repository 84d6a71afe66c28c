//! Adaptive state and parameter estimation for second-order single-output
//! systems `ẏ = f(y,t)x + g₀(y,t)`, `ẋ = g₁(y,t) + φ(y,t)ᵀθ`, built on
//! filtered changes of coordinates.
//!
//! Two estimators are provided: [`vec_estimator::VecEstimator`] filters the
//! regressor through a vector state `μ`, and
//! [`mat_estimator::MatEstimator`] through a matrix state `M`. The matrix
//! form converts the excitation requirement on `φ` into the weaker
//! condition that `det M` is not square integrable.

pub mod diagnostics;
pub mod gains;
pub mod harness;
pub mod linalg;
pub mod mat_estimator;
pub mod model;
pub mod ode;
pub mod signals;
pub mod vec_estimator;
