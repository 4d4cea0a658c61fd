//! Corpus model: feature sequences with speaker metadata, a synthetic
//! speech-like generator, normalization, and batching.

pub mod batch;
pub mod norm;
pub mod synth;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::numerics::scalar::Scalar;

pub use batch::{make_batches, Batch, BatchMode};
pub use norm::{
    apply_norm, fit_norm_stats, normalize_corpus, NormEntry, NormStats, NormalizationMode,
};
pub use synth::{gen_synthetic_corpus, SynthConfig};

/// Speaker gender tag; trials only ever pair like with like.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Gender {
    F,
    M,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::F => "F",
            Gender::M => "M",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "F" => Some(Gender::F),
            "M" => Some(Gender::M),
            _ => None,
        }
    }
}

/// One utterance: a `(T, D)` frame matrix plus optional frame labels.
#[derive(Clone, Debug)]
pub struct FeatureSequence<F> {
    pub utterance_id: String,
    pub speaker_id: String,
    pub frames: Matrix<F>,
    pub labels: Option<Vec<u32>>,
}

impl<F: Scalar> FeatureSequence<F> {
    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }

    /// Labels must line up one-to-one with frames.
    pub fn validate(&self) -> Result<()> {
        if let Some(labels) = &self.labels {
            if labels.len() != self.frames.rows() {
                return Err(Error::Shape {
                    op: "labels",
                    expected: (self.frames.rows(), 1),
                    got: (labels.len(), 1),
                });
            }
        }
        Ok(())
    }
}

/// A set of utterances plus per-speaker gender metadata.
#[derive(Clone, Debug)]
pub struct Corpus<F> {
    pub utterances: Vec<FeatureSequence<F>>,
    pub genders: BTreeMap<String, Gender>,
}

impl<F: Scalar> Corpus<F> {
    pub fn new() -> Self {
        Self { utterances: Vec::new(), genders: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Feature width, from the first utterance.
    pub fn dim(&self) -> Result<usize> {
        self.utterances
            .first()
            .map(|u| u.dim())
            .ok_or(Error::EmptyInput { what: "corpus" })
    }

    /// Distinct speaker ids in sorted order.
    pub fn speakers(&self) -> Vec<String> {
        let mut ids: Vec<String> =
            self.utterances.iter().map(|u| u.speaker_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn total_frames(&self) -> usize {
        self.utterances.iter().map(|u| u.len()).sum()
    }
}

impl<F: Scalar> Default for Corpus<F> {
    fn default() -> Self {
        Self::new()
    }
}
