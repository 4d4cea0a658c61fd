//! Verification trial lists: all same-speaker pairs as targets, plus
//! sampled same-gender different-speaker pairs as nontargets. Cross-gender
//! pairs are never emitted.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{Corpus, Gender};
use crate::error::{Error, Result};
use crate::numerics::scalar::Scalar;
use crate::rng::SeededRng;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trial {
    pub utt_a: String,
    pub utt_b: String,
    pub same_speaker: bool,
    /// Gender shared by both sides of the pair.
    pub gender: Gender,
}

#[derive(Clone, Debug, Default)]
pub struct TrialList {
    /// Targets first (speakers in sorted order), then sampled nontargets.
    pub trials: Vec<Trial>,
    /// Genders present with fewer than two speakers: no nontarget pairs
    /// could be formed for them.
    pub skipped: Vec<Gender>,
}

impl TrialList {
    pub fn n_targets(&self) -> usize {
        self.trials.iter().filter(|t| t.same_speaker).count()
    }

    pub fn n_nontargets(&self) -> usize {
        self.trials.len() - self.n_targets()
    }
}

/// Builds the trial list. `max_per_speaker` bounds the sampled nontarget
/// trials anchored on each speaker; sampling is with replacement, so
/// duplicate pairs can occur. Deterministic under `seed`.
pub fn build_trials<F: Scalar>(
    corpus: &Corpus<F>,
    seed: u64,
    max_per_speaker: usize,
) -> Result<TrialList> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput { what: "corpus" });
    }
    // Utterances per speaker, in corpus order; speakers iterate sorted.
    let mut by_speaker: alloc::collections::BTreeMap<&str, Vec<&str>> =
        alloc::collections::BTreeMap::new();
    for utt in &corpus.utterances {
        by_speaker.entry(&utt.speaker_id).or_default().push(&utt.utterance_id);
    }
    let gender_of = |speaker: &str| -> Result<Gender> {
        corpus.genders.get(speaker).copied().ok_or_else(|| Error::Config {
            message: format!("speaker {speaker:?} has no gender metadata"),
        })
    };

    let mut list = TrialList::default();
    for (speaker, utts) in &by_speaker {
        let gender = gender_of(speaker)?;
        for i in 0..utts.len() {
            for j in i + 1..utts.len() {
                list.trials.push(Trial {
                    utt_a: String::from(utts[i]),
                    utt_b: String::from(utts[j]),
                    same_speaker: true,
                    gender,
                });
            }
        }
    }

    let mut rng = SeededRng::new(seed);
    for gender in [Gender::F, Gender::M] {
        let pool: Vec<&str> = by_speaker
            .keys()
            .copied()
            .filter(|s| corpus.genders.get(*s).copied() == Some(gender))
            .collect();
        if pool.is_empty() {
            continue;
        }
        if pool.len() < 2 {
            list.skipped.push(gender);
            continue;
        }
        for (si, speaker) in pool.iter().enumerate() {
            for _ in 0..max_per_speaker {
                let mut oi = rng.index(pool.len() - 1);
                if oi >= si {
                    oi += 1;
                }
                let other = pool[oi];
                let a = by_speaker[speaker][rng.index(by_speaker[speaker].len())];
                let b = by_speaker[other][rng.index(by_speaker[other].len())];
                list.trials.push(Trial {
                    utt_a: String::from(a),
                    utt_b: String::from(b),
                    same_speaker: false,
                    gender,
                });
            }
        }
    }
    Ok(list)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureSequence;
    use crate::numerics::matrix::Matrix;

    fn corpus(speakers: &[(&str, Gender, usize)]) -> Corpus<f32> {
        let mut corpus = Corpus::new();
        for &(name, gender, utts) in speakers {
            corpus.genders.insert(String::from(name), gender);
            for u in 0..utts {
                corpus.utterances.push(FeatureSequence {
                    utterance_id: format!("{name}_u{u}"),
                    speaker_id: String::from(name),
                    frames: Matrix::zeros(3, 2),
                    labels: None,
                });
            }
        }
        corpus
    }

    #[test]
    fn target_count_follows_the_pair_formula() {
        // 4 speakers x 4 utterances: 4 * C(4,2) = 24 targets.
        let c = corpus(&[
            ("a", Gender::F, 4),
            ("b", Gender::F, 4),
            ("c", Gender::M, 4),
            ("d", Gender::M, 4),
        ]);
        let list = build_trials(&c, 7, 3).unwrap();
        assert_eq!(list.n_targets(), 24);
        assert_eq!(list.n_nontargets(), 4 * 3);
        assert!(list.skipped.is_empty());
    }

    #[test]
    fn lone_gender_is_skipped_wholesale() {
        let c = corpus(&[("f1", Gender::F, 3), ("f2", Gender::F, 3), ("m1", Gender::M, 3)]);
        let list = build_trials(&c, 7, 5).unwrap();
        assert_eq!(list.skipped, alloc::vec![Gender::M]);
        // Nontargets exist only for the two females.
        for t in list.trials.iter().filter(|t| !t.same_speaker) {
            assert_eq!(t.gender, Gender::F);
        }
        assert_eq!(list.n_nontargets(), 2 * 5);
        // Targets still cover every speaker, including the lone male.
        assert_eq!(list.n_targets(), 3 * 3);
    }

    #[test]
    fn no_cross_gender_and_no_same_speaker_nontargets() {
        let c = corpus(&[
            ("a", Gender::F, 2),
            ("b", Gender::M, 3),
            ("c", Gender::F, 4),
            ("d", Gender::M, 2),
            ("e", Gender::F, 3),
        ]);
        let speaker_of = |utt: &str| String::from(utt.split("_u").next().unwrap());
        let list = build_trials(&c, 11, 10).unwrap();
        for t in &list.trials {
            let (sa, sb) = (speaker_of(&t.utt_a), speaker_of(&t.utt_b));
            assert_eq!(c.genders[&sa], t.gender);
            assert_eq!(c.genders[&sb], t.gender);
            assert_eq!(t.same_speaker, sa == sb);
        }
    }

    #[test]
    fn same_seed_reproduces_the_list() {
        let c = corpus(&[("a", Gender::F, 3), ("b", Gender::F, 2), ("m", Gender::M, 4)]);
        let x = build_trials(&c, 13, 6).unwrap();
        let y = build_trials(&c, 13, 6).unwrap();
        assert_eq!(x.trials, y.trials);
        let z = build_trials(&c, 14, 6).unwrap();
        assert_ne!(x.trials, z.trials);
    }

    #[test]
    fn missing_gender_metadata_is_an_error() {
        let mut c = corpus(&[("a", Gender::F, 2), ("b", Gender::F, 2)]);
        c.genders.remove("b");
        assert!(matches!(build_trials(&c, 1, 2), Err(Error::Config { .. })));
    }
}
