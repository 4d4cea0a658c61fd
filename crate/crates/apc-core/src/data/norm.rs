//! Mean/variance normalization, per speaker or corpus-global.
//!
//! Statistics accumulate in f64 with a fixed two-pass order regardless of
//! the corpus precision, then freeze into reusable stats so held-out data
//! from the same speakers can be normalized identically. Per-speaker mode
//! removes each speaker's additive signature (good for phone probing);
//! global mode keeps it (required when downstream tasks need speaker
//! information).

#[allow(unused_imports)]
use num_traits::Float;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::numerics::scalar::Scalar;

const STD_FLOOR: f64 = 1e-8;
/// Stats key used in global mode, where one entry covers every speaker.
pub const GLOBAL_KEY: &str = "*";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormalizationMode {
    PerSpeaker,
    Global,
}

impl NormalizationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NormalizationMode::PerSpeaker => "per_speaker",
            NormalizationMode::Global => "global",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "per_speaker" => Some(NormalizationMode::PerSpeaker),
            "global" => Some(NormalizationMode::Global),
            _ => None,
        }
    }
}

/// Per-dimension mean and population standard deviation for one group.
#[derive(Clone, Debug)]
pub struct NormEntry {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Frozen normalization statistics.
#[derive(Clone, Debug)]
pub struct NormStats {
    pub mode: NormalizationMode,
    pub dim: usize,
    /// Keyed by speaker id, or [`GLOBAL_KEY`] in global mode.
    pub entries: BTreeMap<String, NormEntry>,
}

impl NormStats {
    fn entry_for(&self, speaker: &str) -> Result<&NormEntry> {
        let key = match self.mode {
            NormalizationMode::PerSpeaker => speaker,
            NormalizationMode::Global => GLOBAL_KEY,
        };
        self.entries
            .get(key)
            .ok_or_else(|| Error::UnknownSpeaker { speaker: speaker.to_string() })
    }
}

/// Computes normalization statistics without modifying the corpus.
pub fn fit_norm_stats<F: Scalar>(corpus: &Corpus<F>, mode: NormalizationMode) -> Result<NormStats> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput { what: "corpus" });
    }
    let dim = corpus.dim()?;

    // Group utterance indices; single group in global mode.
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, utt) in corpus.utterances.iter().enumerate() {
        if utt.dim() != dim {
            return Err(Error::Shape {
                op: "fit_norm_stats",
                expected: (utt.len(), dim),
                got: (utt.len(), utt.dim()),
            });
        }
        let key = match mode {
            NormalizationMode::PerSpeaker => utt.speaker_id.clone(),
            NormalizationMode::Global => String::from(GLOBAL_KEY),
        };
        groups.entry(key).or_default().push(i);
    }

    let mut entries = BTreeMap::new();
    for (key, idxs) in groups {
        let frames: usize = idxs.iter().map(|&i| corpus.utterances[i].len()).sum();
        if frames < 2 {
            return Err(Error::Config {
                message: format!("group {key} has {frames} frames; need >= 2 to normalize"),
            });
        }
        let n = frames as f64;
        let mut mean = vec![0.0f64; dim];
        for &i in &idxs {
            for row in 0..corpus.utterances[i].len() {
                let r = corpus.utterances[i].frames.row(row);
                for (d, &v) in r.iter().enumerate() {
                    mean[d] += v.to_f64();
                }
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0f64; dim];
        for &i in &idxs {
            for row in 0..corpus.utterances[i].len() {
                let r = corpus.utterances[i].frames.row(row);
                for (d, &v) in r.iter().enumerate() {
                    let c = v.to_f64() - mean[d];
                    var[d] += c * c;
                }
            }
        }
        let std = var.iter().map(|&v| (v / n).sqrt()).collect();
        entries.insert(key, NormEntry { mean, std });
    }
    Ok(NormStats { mode, dim, entries })
}

/// Applies frozen stats in place: `x <- (x - mean) / max(std, 1e-8)`.
///
/// Errors on a speaker missing from per-speaker stats, so held-out data
/// can only reuse stats from speakers seen at fit time.
pub fn apply_norm<F: Scalar>(corpus: &mut Corpus<F>, stats: &NormStats) -> Result<()> {
    for utt in &mut corpus.utterances {
        if utt.dim() != stats.dim {
            return Err(Error::Shape {
                op: "apply_norm",
                expected: (utt.len(), stats.dim),
                got: (utt.len(), utt.dim()),
            });
        }
        let entry = stats.entry_for(&utt.speaker_id)?;
        for row in 0..utt.frames.rows() {
            let r = utt.frames.row_mut(row);
            for (d, v) in r.iter_mut().enumerate() {
                let denom = entry.std[d].max(STD_FLOOR);
                *v = F::from_f64((v.to_f64() - entry.mean[d]) / denom);
            }
        }
    }
    Ok(())
}

/// Fit-then-apply convenience; returns the stats for later reuse.
pub fn normalize_corpus<F: Scalar>(
    corpus: &mut Corpus<F>,
    mode: NormalizationMode,
) -> Result<NormStats> {
    let stats = fit_norm_stats(corpus, mode)?;
    apply_norm(corpus, &stats)?;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{gen_synthetic_corpus, SynthConfig};
    use crate::data::{FeatureSequence, Gender};
    use crate::numerics::matrix::Matrix;

    fn one_speaker_corpus(values: &[f64]) -> Corpus<f64> {
        let mut corpus = Corpus::new();
        corpus.genders.insert(String::from("s0"), Gender::F);
        corpus.utterances.push(FeatureSequence {
            utterance_id: String::from("s0_u0"),
            speaker_id: String::from("s0"),
            frames: Matrix::from_vec(values.len(), 1, values.to_vec()).unwrap(),
            labels: None,
        });
        corpus
    }

    #[test]
    fn worked_single_speaker_example() {
        let mut corpus = one_speaker_corpus(&[1.0, 3.0]);
        normalize_corpus(&mut corpus, NormalizationMode::PerSpeaker).unwrap();
        assert_eq!(corpus.utterances[0].frames.as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn renormalizing_is_idempotent() {
        let cfg = SynthConfig {
            n_speakers: 3,
            utterances_per_speaker: 2,
            frames_per_utterance: 50,
            feature_dim: 8,
            seed: 5,
            ..SynthConfig::default()
        };
        let mut corpus: Corpus<f64> = gen_synthetic_corpus(&cfg).unwrap();
        normalize_corpus(&mut corpus, NormalizationMode::PerSpeaker).unwrap();
        let snapshot: Vec<Vec<f64>> =
            corpus.utterances.iter().map(|u| u.frames.as_slice().to_vec()).collect();
        normalize_corpus(&mut corpus, NormalizationMode::PerSpeaker).unwrap();
        for (utt, before) in corpus.utterances.iter().zip(&snapshot) {
            for (a, b) in utt.frames.as_slice().iter().zip(before) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn constant_dimension_maps_to_zero() {
        let mut corpus = one_speaker_corpus(&[4.0, 4.0, 4.0]);
        normalize_corpus(&mut corpus, NormalizationMode::PerSpeaker).unwrap();
        assert_eq!(corpus.utterances[0].frames.as_slice(), &[0.0, 0.0, 0.0]);
    }

    fn check_group_moments(corpus: &Corpus<f64>, key: impl Fn(&str) -> String) {
        let mut sums: BTreeMap<String, (Vec<f64>, Vec<f64>, usize)> = BTreeMap::new();
        let dim = corpus.dim().unwrap();
        for utt in &corpus.utterances {
            let e = sums
                .entry(key(&utt.speaker_id))
                .or_insert((vec![0.0; dim], vec![0.0; dim], 0));
            for row in 0..utt.len() {
                for (d, v) in utt.frames.row(row).iter().enumerate() {
                    e.0[d] += v;
                    e.1[d] += v * v;
                }
                e.2 += 1;
            }
        }
        for (_, (s, s2, n)) in sums {
            for d in 0..dim {
                let mean = s[d] / n as f64;
                let std = (s2[d] / n as f64 - mean * mean).sqrt();
                assert!(mean.abs() < 1e-6, "mean {mean}");
                assert!((std - 1.0).abs() < 1e-3 || std.abs() < 1e-6, "std {std}");
            }
        }
    }

    #[test]
    fn per_speaker_moments_after_normalization() {
        let cfg = SynthConfig {
            n_speakers: 4,
            utterances_per_speaker: 3,
            frames_per_utterance: 60,
            feature_dim: 10,
            seed: 9,
            ..SynthConfig::default()
        };
        let mut corpus: Corpus<f64> = gen_synthetic_corpus(&cfg).unwrap();
        normalize_corpus(&mut corpus, NormalizationMode::PerSpeaker).unwrap();
        check_group_moments(&corpus, |s| String::from(s));
    }

    #[test]
    fn global_moments_after_normalization() {
        let cfg = SynthConfig {
            n_speakers: 4,
            utterances_per_speaker: 3,
            frames_per_utterance: 60,
            feature_dim: 10,
            seed: 13,
            ..SynthConfig::default()
        };
        let mut corpus: Corpus<f64> = gen_synthetic_corpus(&cfg).unwrap();
        normalize_corpus(&mut corpus, NormalizationMode::Global).unwrap();
        check_group_moments(&corpus, |_| String::from(GLOBAL_KEY));
    }

    #[test]
    fn global_mode_preserves_speaker_separation_per_speaker_removes_it() {
        // The speaker offset is additive, so per-speaker normalization
        // centers it away while global normalization keeps speakers apart.
        let cfg = SynthConfig {
            n_speakers: 4,
            utterances_per_speaker: 4,
            frames_per_utterance: 80,
            feature_dim: 12,
            noise_sigma: 0.1,
            seed: 21,
            ..SynthConfig::default()
        };
        let spread = |mode: NormalizationMode| {
            let mut corpus: Corpus<f64> = gen_synthetic_corpus(&cfg).unwrap();
            normalize_corpus(&mut corpus, mode).unwrap();
            // Mean distance between per-speaker mean vectors.
            let mut means: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
            for utt in &corpus.utterances {
                let e = means
                    .entry(utt.speaker_id.clone())
                    .or_insert((vec![0.0; cfg.feature_dim], 0));
                for row in 0..utt.len() {
                    for (d, v) in utt.frames.row(row).iter().enumerate() {
                        e.0[d] += v;
                    }
                    e.1 += 1;
                }
            }
            let centroids: Vec<Vec<f64>> = means
                .values()
                .map(|(s, n)| s.iter().map(|v| v / *n as f64).collect())
                .collect();
            let mut total = 0.0;
            let mut pairs = 0usize;
            for i in 0..centroids.len() {
                for j in i + 1..centroids.len() {
                    let d2: f64 = centroids[i]
                        .iter()
                        .zip(&centroids[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    total += d2.sqrt();
                    pairs += 1;
                }
            }
            total / pairs as f64
        };
        let per_speaker = spread(NormalizationMode::PerSpeaker);
        let global = spread(NormalizationMode::Global);
        assert!(
            global > 4.0 * per_speaker,
            "global {global:.4} vs per-speaker {per_speaker:.4}"
        );
    }

    #[test]
    fn held_out_application_requires_known_speaker() {
        let mut train = one_speaker_corpus(&[1.0, 3.0]);
        let stats = normalize_corpus(&mut train, NormalizationMode::PerSpeaker).unwrap();
        let mut unseen = one_speaker_corpus(&[2.0, 5.0]);
        unseen.utterances[0].speaker_id = String::from("ghost");
        assert!(apply_norm(&mut unseen, &stats).is_err());
    }

    #[test]
    fn too_few_frames_rejected() {
        let corpus = one_speaker_corpus(&[1.0]);
        assert!(fit_norm_stats(&corpus, NormalizationMode::PerSpeaker).is_err());
    }
}
