//! Error type shared by all modules of the crate.

use alloc::string::String;
use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by numeric kernels, models, and data handling.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Two operands have incompatible shapes.
    #[error("{op}: dimension mismatch, left is {}x{} but right is {}x{}", lhs.0, lhs.1, rhs.0, rhs.1)]
    Dimension {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    /// A single operand has the wrong shape for the operation.
    #[error("{op}: expected shape {}x{}, got {}x{}", expected.0, expected.1, got.0, got.1)]
    Shape {
        op: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    /// A matrix constructor received data of the wrong length.
    #[error("matrix {rows}x{cols} requires {} values, got {got}", rows * cols)]
    DataLength { rows: usize, cols: usize, got: usize },
    /// Prediction shift `n` does not fit in a sequence of length `len`.
    #[error("shift {n} out of range for sequence of length {len}")]
    Shift { n: usize, len: usize },
    /// An operation got an empty input it cannot handle.
    #[error("{what}: empty input")]
    EmptyInput { what: &'static str },
    /// A parameter name was registered twice.
    #[error("parameter {name:?} already exists")]
    DuplicateParam { name: String },
    /// A parameter name was not found in the store.
    #[error("unknown parameter {name:?}")]
    UnknownParam { name: String },
    /// The optimizer found a parameter whose gradient was never populated.
    #[error("gradient for parameter {name:?} was not populated before the update")]
    MissingGradient { name: String },
    /// Optimizer state does not match the parameter store it is applied to.
    #[error("optimizer state inconsistent with parameters: {detail}")]
    OptimizerState { detail: String },
    /// A speaker id was not present in the fitted normalization statistics.
    #[error("unknown speaker {speaker:?} at normalization time")]
    UnknownSpeaker { speaker: String },
    /// A sampler had no eligible frames to draw from.
    #[error("negative sampling failed: {reason}")]
    Sampling { reason: String },
    /// A class label fell outside the configured range.
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: u32, classes: usize },
    /// An utterance is too short for the requested operation.
    #[error("utterance {id:?} has {len} frames, needs at least {needed}")]
    ShortUtterance { id: String, len: usize, needed: usize },
    /// A layer index was outside the model's layer range.
    #[error("layer {layer} out of range, model has {layers} layers")]
    LayerOutOfRange { layer: usize, layers: usize },
    /// A non-finite value surfaced where the contract requires finite math.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    /// A configuration value failed validation.
    #[error("invalid configuration: {message}")]
    Config { message: String },
}
