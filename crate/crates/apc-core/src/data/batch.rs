//! Epoch batching: shuffled length-bucketed padding, or fixed-length
//! random chunks.
//!
//! Every utterance appears exactly once per epoch in both modes. Padded
//! batches carry true lengths and zero pad rows; consumers either slice to
//! the true length or mask, so the pad region never contributes to losses.

use alloc::string::String;
use alloc::vec::Vec;

use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::numerics::scalar::Scalar;
use crate::rng::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchMode {
    /// Shuffle, bucket by length, zero-pad to the batch maximum.
    Padded,
    /// Take one uniformly placed window of exactly `len` frames per
    /// utterance. Shorter utterances are rejected unless `pad_short`,
    /// in which case they are zero-padded and masked via `lengths`.
    Chunked { len: usize, pad_short: bool },
}

/// A group of utterances stacked into one `(B * t_max, D)` matrix.
#[derive(Clone, Debug)]
pub struct Batch<F> {
    pub utterance_ids: Vec<String>,
    pub speaker_ids: Vec<String>,
    frames: Matrix<F>,
    t_max: usize,
    pub lengths: Vec<usize>,
    /// Per-utterance frame labels over the true length, when the whole
    /// corpus is labeled.
    pub labels: Option<Vec<Vec<u32>>>,
}

impl<F: Scalar> Batch<F> {
    pub fn size(&self) -> usize {
        self.lengths.len()
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }

    /// Frames of utterance `b` sliced to its true length.
    pub fn utterance_frames(&self, b: usize) -> Matrix<F> {
        let mut out = Matrix::zeros(self.lengths[b], self.frames.cols());
        for t in 0..self.lengths[b] {
            out.copy_row_from(t, &self.frames, b * self.t_max + t);
        }
        out
    }

    /// The padded block including zero rows, for mask-equivalence tests.
    pub fn padded_block(&self, b: usize) -> Matrix<F> {
        let mut out = Matrix::zeros(self.t_max, self.frames.cols());
        for t in 0..self.t_max {
            out.copy_row_from(t, &self.frames, b * self.t_max + t);
        }
        out
    }

    pub fn total_frames(&self) -> usize {
        self.lengths.iter().sum()
    }
}

/// Builds one epoch of batches. Calling again with an equally seeded rng
/// reproduces the same composition bitwise.
pub fn make_batches<F: Scalar>(
    corpus: &Corpus<F>,
    batch_size: usize,
    mode: BatchMode,
    rng: &mut SeededRng,
) -> Result<Vec<Batch<F>>> {
    if batch_size < 1 {
        return Err(Error::Config { message: String::from("batch_size must be >= 1") });
    }
    if corpus.is_empty() {
        return Err(Error::EmptyInput { what: "corpus" });
    }
    let dim = corpus.dim()?;
    let labeled = corpus.utterances.iter().all(|u| u.labels.is_some());

    let mut order: Vec<usize> = (0..corpus.len()).collect();
    rng.shuffle(&mut order);

    if let BatchMode::Padded = mode {
        // Stable sort keeps the shuffled order inside equal-length runs.
        order.sort_by_key(|&i| corpus.utterances[i].len());
    }

    let mut groups: Vec<Vec<usize>> =
        order.chunks(batch_size).map(|c| c.to_vec()).collect();
    if let BatchMode::Padded = mode {
        rng.shuffle(&mut groups);
    }

    let mut batches = Vec::with_capacity(groups.len());
    for group in groups {
        let batch = match mode {
            BatchMode::Padded => build_padded(corpus, &group, dim, labeled),
            BatchMode::Chunked { len, pad_short } => {
                build_chunked(corpus, &group, dim, labeled, len, pad_short, rng)?
            }
        };
        batches.push(batch);
    }
    Ok(batches)
}

fn build_padded<F: Scalar>(
    corpus: &Corpus<F>,
    group: &[usize],
    dim: usize,
    labeled: bool,
) -> Batch<F> {
    let t_max = group.iter().map(|&i| corpus.utterances[i].len()).max().unwrap_or(0);
    let mut frames = Matrix::zeros(group.len() * t_max, dim);
    let mut lengths = Vec::with_capacity(group.len());
    let mut utterance_ids = Vec::with_capacity(group.len());
    let mut speaker_ids = Vec::with_capacity(group.len());
    let mut labels = labeled.then(Vec::new);
    for (b, &i) in group.iter().enumerate() {
        let utt = &corpus.utterances[i];
        for t in 0..utt.len() {
            frames.copy_row_from(b * t_max + t, &utt.frames, t);
        }
        lengths.push(utt.len());
        utterance_ids.push(utt.utterance_id.clone());
        speaker_ids.push(utt.speaker_id.clone());
        if let Some(ls) = &mut labels {
            ls.push(utt.labels.clone().unwrap_or_default());
        }
    }
    Batch { utterance_ids, speaker_ids, frames, t_max, lengths, labels }
}

#[allow(clippy::too_many_arguments)]
fn build_chunked<F: Scalar>(
    corpus: &Corpus<F>,
    group: &[usize],
    dim: usize,
    labeled: bool,
    len: usize,
    pad_short: bool,
    rng: &mut SeededRng,
) -> Result<Batch<F>> {
    let mut frames = Matrix::zeros(group.len() * len, dim);
    let mut lengths = Vec::with_capacity(group.len());
    let mut utterance_ids = Vec::with_capacity(group.len());
    let mut speaker_ids = Vec::with_capacity(group.len());
    let mut labels = labeled.then(Vec::new);
    for (b, &i) in group.iter().enumerate() {
        let utt = &corpus.utterances[i];
        let t_len = utt.len();
        let (start, take) = if t_len < len {
            if !pad_short {
                return Err(Error::ShortUtterance {
                    id: utt.utterance_id.clone(),
                    len: t_len,
                    needed: len,
                });
            }
            (0, t_len)
        } else {
            (rng.index(t_len - len + 1), len)
        };
        for t in 0..take {
            frames.copy_row_from(b * len + t, &utt.frames, start + t);
        }
        lengths.push(take);
        utterance_ids.push(utt.utterance_id.clone());
        speaker_ids.push(utt.speaker_id.clone());
        if let Some(ls) = &mut labels {
            let src = utt.labels.as_ref().unwrap();
            ls.push(src[start..start + take].to_vec());
        }
    }
    Ok(Batch { utterance_ids, speaker_ids, frames, t_max: len, lengths, labels })
}
