//! Dense-matrix kernel, parameter storage, Adam, and gradient checking.
//!
//! All heavier modules (LSTM layers, the APC and CPC objectives, probes)
//! are built from these pieces. Summation orders are fixed everywhere so
//! that identical seeds give bitwise-identical training trajectories.

pub mod adam;
pub mod dense;
pub mod gradcheck;
pub mod matrix;
pub mod param;
pub mod scalar;

pub use adam::{adam_step, AdamState};
pub use dense::Dense;
pub use gradcheck::{grad_check, grad_check_sampled, GradCheckReport};
pub use matrix::{Activation, Matrix};
pub use param::ParamStore;
pub use scalar::Scalar;
