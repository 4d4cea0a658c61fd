//! Self-supervised speech representation learning on dense numerics built
//! from scratch.
//!
//! The crate trains two kinds of predictive models over frame sequences:
//!
//! * [`apc`]: stacked unidirectional LSTMs that regress a future frame from
//!   the past, trained with an L1 objective.
//! * [`cpc`]: a frame encoder plus LSTM context network trained to pick the
//!   true future frame out of sampled negatives.
//!
//! [`probes`] measures what the learned representations encode: a linear or
//! one-hidden-layer classifier for frame labels, and a cosine-scored
//! speaker-verification pipeline with optional supervised projection.
//! [`data`] generates the synthetic corpus used by the test suite and by
//! the companion CLI.
//!
//! Everything is deterministic: computations fix their summation order,
//! parameters live in name-sorted stores, and all randomness flows from
//! [`rng::SeededRng`]. Two runs with the same seed produce bitwise-identical
//! parameters, losses, and reports.
//!
//! The crate is `no_std` + `alloc`; file IO, audio parsing, and the CLI
//! live in the companion `apc-cli` crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod apc;
pub mod cpc;
pub mod data;
pub mod error;
pub mod lstm;
pub mod numerics;
pub mod probes;
pub mod rng;

pub use error::{Error, Result};
pub use numerics::matrix::{Activation, Matrix};
pub use numerics::param::ParamStore;
pub use numerics::scalar::Scalar;
pub use rng::SeededRng;
