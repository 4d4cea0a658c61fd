//! Synthetic speech-like corpus with known phone and speaker structure.
//!
//! Each phone class owns a random template vector; each speaker owns a
//! random additive offset and a gender. An utterance walks a Markov chain
//! over phones with geometric segment lengths, and frames follow the
//! target `template + offset` through first-order smoothing plus Gaussian
//! noise. Phone identity is therefore linearly decodable (template) while
//! speaker identity is a stable additive component (offset), which is
//! exactly what the two probe tasks need to be meaningful.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{Corpus, FeatureSequence, Gender};
use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::numerics::scalar::Scalar;
use crate::rng::SeededRng;

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub n_speakers: usize,
    pub n_phones: usize,
    pub utterances_per_speaker: usize,
    pub frames_per_utterance: usize,
    pub feature_dim: usize,
    /// Mean frames per phone segment (geometric dwell).
    pub phone_dwell: f64,
    pub speaker_offset_scale: f64,
    pub noise_sigma: f64,
    /// First-order smoothing coefficient in [0, 1).
    pub temporal_smoothing: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_speakers: 20,
            n_phones: 10,
            utterances_per_speaker: 20,
            frames_per_utterance: 100,
            feature_dim: 80,
            phone_dwell: 8.0,
            speaker_offset_scale: 1.0,
            noise_sigma: 0.3,
            temporal_smoothing: 0.7,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_speakers", self.n_speakers),
            ("n_phones", self.n_phones),
            ("utterances_per_speaker", self.utterances_per_speaker),
            ("frames_per_utterance", self.frames_per_utterance),
            ("feature_dim", self.feature_dim),
        ];
        for (name, v) in counts {
            if v < 1 {
                return Err(Error::Config { message: format!("{name} must be >= 1, got {v}") });
            }
        }
        if !(self.temporal_smoothing >= 0.0 && self.temporal_smoothing < 1.0) {
            return Err(Error::Config {
                message: format!(
                    "temporal_smoothing must be in [0, 1), got {}",
                    self.temporal_smoothing
                ),
            });
        }
        if self.phone_dwell < 1.0 {
            return Err(Error::Config {
                message: format!("phone_dwell must be >= 1, got {}", self.phone_dwell),
            });
        }
        if self.noise_sigma < 0.0 || self.speaker_offset_scale < 0.0 {
            return Err(Error::Config {
                message: String::from("noise_sigma and speaker_offset_scale must be >= 0"),
            });
        }
        Ok(())
    }
}

/// Phone templates and speaker offsets drawn for a config; exposed so
/// tests can run oracle classifiers against the true generative state.
#[derive(Clone, Debug)]
pub struct SynthTruth {
    /// `(n_phones, feature_dim)`, standard normal entries.
    pub templates: Matrix<f64>,
    /// `(n_speakers, feature_dim)`, normal with speaker_offset_scale.
    pub offsets: Matrix<f64>,
}

pub fn synth_truth(cfg: &SynthConfig) -> Result<SynthTruth> {
    cfg.validate()?;
    let root = SeededRng::new(cfg.seed);
    let mut template_rng = root.derive(1);
    let templates =
        Matrix::from_fn(cfg.n_phones, cfg.feature_dim, |_, _| template_rng.normal(0.0, 1.0));
    let mut offset_rng = root.derive(2);
    let offsets = Matrix::from_fn(cfg.n_speakers, cfg.feature_dim, |_, _| {
        offset_rng.normal(0.0, cfg.speaker_offset_scale)
    });
    Ok(SynthTruth { templates, offsets })
}

pub fn speaker_name(s: usize) -> String {
    format!("spk{s:03}")
}

pub fn utterance_name(s: usize, u: usize) -> String {
    format!("spk{s:03}_utt{u:03}")
}

/// Generates the corpus. Deterministic: the same config (including seed)
/// yields a bitwise-identical corpus.
pub fn gen_synthetic_corpus<F: Scalar>(cfg: &SynthConfig) -> Result<Corpus<F>> {
    let truth = synth_truth(cfg)?;
    let root = SeededRng::new(cfg.seed);
    let utt_root = root.derive(3);
    let alpha = cfg.temporal_smoothing;
    let switch_p = 1.0 / cfg.phone_dwell;

    let mut corpus = Corpus::new();
    for s in 0..cfg.n_speakers {
        let speaker = speaker_name(s);
        let gender = if s % 2 == 0 { Gender::F } else { Gender::M };
        corpus.genders.insert(speaker.clone(), gender);
        for u in 0..cfg.utterances_per_speaker {
            let global = (s * cfg.utterances_per_speaker + u) as u64;
            let mut rng = utt_root.derive(global);

            let mut labels = Vec::with_capacity(cfg.frames_per_utterance);
            let mut phone = rng.index(cfg.n_phones);
            for _ in 0..cfg.frames_per_utterance {
                labels.push(phone as u32);
                if cfg.n_phones > 1 && rng.uniform(0.0, 1.0) < switch_p {
                    // Jump to a different phone, uniform over the others.
                    let step = 1 + rng.index(cfg.n_phones - 1);
                    phone = (phone + step) % cfg.n_phones;
                }
            }

            let mut frames = Matrix::zeros(cfg.frames_per_utterance, cfg.feature_dim);
            let mut prev: Vec<f64> = (0..cfg.feature_dim)
                .map(|d| truth.templates.get(labels[0] as usize, d) + truth.offsets.get(s, d))
                .collect();
            for (t, &label) in labels.iter().enumerate() {
                for d in 0..cfg.feature_dim {
                    let target =
                        truth.templates.get(label as usize, d) + truth.offsets.get(s, d);
                    let v = alpha * prev[d]
                        + (1.0 - alpha) * target
                        + rng.normal(0.0, cfg.noise_sigma);
                    frames.set(t, d, F::from_f64(v));
                    prev[d] = v;
                }
            }

            corpus.utterances.push(FeatureSequence {
                utterance_id: utterance_name(s, u),
                speaker_id: speaker.clone(),
                frames,
                labels: Some(labels),
            });
        }
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SynthConfig {
        SynthConfig {
            n_speakers: 4,
            n_phones: 5,
            utterances_per_speaker: 3,
            frames_per_utterance: 40,
            feature_dim: 16,
            seed: 11,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn structure_and_determinism() {
        let cfg = small_cfg();
        let a: Corpus<f32> = gen_synthetic_corpus(&cfg).unwrap();
        let b: Corpus<f32> = gen_synthetic_corpus(&cfg).unwrap();
        assert_eq!(a.len(), 12);
        assert_eq!(a.genders.len(), 4);
        for (ua, ub) in a.utterances.iter().zip(&b.utterances) {
            assert_eq!(ua.utterance_id, ub.utterance_id);
            assert_eq!(ua.frames, ub.frames);
            assert_eq!(ua.labels, ub.labels);
            ua.validate().unwrap();
            assert_eq!(ua.labels.as_ref().unwrap().len(), 40);
        }
    }

    #[test]
    fn noiseless_unsmoothed_frames_equal_template_plus_offset() {
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            temporal_smoothing: 0.0,
            ..small_cfg()
        };
        let corpus: Corpus<f64> = gen_synthetic_corpus(&cfg).unwrap();
        let truth = synth_truth(&cfg).unwrap();
        for (s_idx, utt) in corpus.utterances.iter().enumerate() {
            let s = s_idx / cfg.utterances_per_speaker;
            let labels = utt.labels.as_ref().unwrap();
            for (t, &label) in labels.iter().enumerate() {
                for d in 0..cfg.feature_dim {
                    let expect =
                        truth.templates.get(label as usize, d) + truth.offsets.get(s, d);
                    assert_eq!(utt.frames.get(t, d), expect);
                }
            }
        }
    }

    #[test]
    fn oracle_template_classifier_clears_80_percent_on_defaults() {
        let cfg = SynthConfig::default();
        let corpus: Corpus<f64> = gen_synthetic_corpus(&cfg).unwrap();
        let truth = synth_truth(&cfg).unwrap();
        let mut correct = 0usize;
        let mut total = 0usize;
        for (i, utt) in corpus.utterances.iter().enumerate() {
            let s = i / cfg.utterances_per_speaker;
            let labels = utt.labels.as_ref().unwrap();
            for (t, &label) in labels.iter().enumerate() {
                let mut best = 0usize;
                let mut best_d2 = f64::INFINITY;
                for p in 0..cfg.n_phones {
                    let mut d2 = 0.0;
                    for d in 0..cfg.feature_dim {
                        let diff = utt.frames.get(t, d)
                            - truth.offsets.get(s, d)
                            - truth.templates.get(p, d);
                        d2 += diff * diff;
                    }
                    if d2 < best_d2 {
                        best_d2 = d2;
                        best = p;
                    }
                }
                total += 1;
                if best == label as usize {
                    correct += 1;
                }
            }
        }
        let acc = correct as f64 / total as f64;
        assert!(acc > 0.80, "oracle accuracy {acc:.4}");
    }

    #[test]
    fn marginal_mean_stable_across_seeds() {
        let base = SynthConfig {
            n_speakers: 10,
            utterances_per_speaker: 5,
            frames_per_utterance: 80,
            feature_dim: 40,
            ..SynthConfig::default()
        };
        let mean_of = |seed: u64| {
            let cfg = SynthConfig { seed, ..base.clone() };
            let corpus: Corpus<f64> = gen_synthetic_corpus(&cfg).unwrap();
            let mut sum = 0.0;
            let mut n = 0usize;
            for utt in &corpus.utterances {
                for v in utt.frames.as_slice() {
                    sum += v;
                    n += 1;
                }
            }
            sum / n as f64
        };
        let a = mean_of(101);
        let b = mean_of(202);
        assert!((a - b).abs() < 0.1, "means {a:.4} vs {b:.4}");
    }

    #[test]
    fn dwell_lengths_average_near_config() {
        let cfg = SynthConfig {
            n_speakers: 2,
            utterances_per_speaker: 10,
            frames_per_utterance: 400,
            feature_dim: 4,
            seed: 7,
            ..SynthConfig::default()
        };
        let corpus: Corpus<f32> = gen_synthetic_corpus(&cfg).unwrap();
        let mut segments = 0usize;
        let mut frames = 0usize;
        for utt in &corpus.utterances {
            let labels = utt.labels.as_ref().unwrap();
            frames += labels.len();
            segments += 1;
            for w in labels.windows(2) {
                if w[0] != w[1] {
                    segments += 1;
                }
            }
        }
        let mean_dwell = frames as f64 / segments as f64;
        assert!(
            (mean_dwell - cfg.phone_dwell).abs() < 1.5,
            "mean dwell {mean_dwell:.2}"
        );
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = small_cfg();
        cfg.n_phones = 0;
        assert!(gen_synthetic_corpus::<f32>(&cfg).is_err());
        let mut cfg = small_cfg();
        cfg.temporal_smoothing = 1.0;
        assert!(gen_synthetic_corpus::<f32>(&cfg).is_err());
    }
}
