//! Measures what a representation encodes: frame-label classifiers scored
//! by frame error rate, and a speaker-verification pipeline built from
//! mean-pooled embeddings, a supervised linear projection, cosine scoring,
//! and equal error rate.

pub mod classifier;
pub mod eer;
pub mod lda;
pub mod trials;

pub use classifier::{
    frame_error_rate, softmax_ce, train_probe, Probe, ProbeKind, ProbeTrainConfig,
};
pub use eer::{compute_eer, EerResult};
pub use lda::{cosine_score, fit_lda, utterance_embed, LdaModel};
pub use trials::{build_trials, Trial, TrialList};
