//! Command implementations and the plumbing they share.
//!
//! Every command loads its inputs before writing anything, so a failed run
//! leaves no partial outputs. Idempotent artifacts (features, manifests,
//! checkpoints, reports, run.meta) are bitwise-reproducible given the same
//! config and seed; wall-clock timestamps go only to run.log.

pub mod extract;
pub mod featurize;
pub mod gen_synth;
pub mod probe_phone;
pub mod probe_speaker;
pub mod sweep;
pub mod train;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use apc_core::data::Corpus;
use apc_core::numerics::Matrix;
use apc_core::SeededRng;

use crate::config::FrozenConfig;
use crate::error::{CliError, Result};
use crate::formats::{self, ManifestRecord};

/// Writes one .feat file per utterance plus the manifest that lists them.
/// Labels ride inside the feature files; returns the manifest path.
pub(crate) fn write_feature_dir(out_dir: &Path, corpus: &Corpus<f64>) -> Result<PathBuf> {
    let mut records = Vec::with_capacity(corpus.len());
    for seq in &corpus.utterances {
        let gender = corpus.genders.get(&seq.speaker_id).copied().ok_or_else(|| {
            CliError::Config(format!("no gender recorded for speaker {}", seq.speaker_id))
        })?;
        let rel = PathBuf::from("features").join(format!("{}.feat", seq.utterance_id));
        formats::save_features(&out_dir.join(&rel), seq)?;
        records.push(ManifestRecord {
            utterance_id: seq.utterance_id.clone(),
            feature_path: rel,
            speaker_id: seq.speaker_id.clone(),
            gender,
            label_path: None,
        });
    }
    let manifest = out_dir.join("manifest.tsv");
    formats::write_manifest(&manifest, &records)?;
    Ok(manifest)
}

/// Records what produced this output directory: the canonical config and
/// its hash, the seed, and the binary version. run.log carries the only
/// timestamp, keeping every other artifact bitwise-reproducible.
pub(crate) fn write_run_records(
    out_dir: &Path,
    command: &str,
    frozen: &FrozenConfig,
    seed: Option<u64>,
) -> Result<()> {
    formats::atomic_write(&out_dir.join("config.txt"), frozen.canonical.as_bytes())?;
    let mut pairs = vec![
        ("command", command.to_string()),
        ("version", env!("CARGO_PKG_VERSION").to_string()),
        ("config_hash", frozen.hash.clone()),
    ];
    if let Some(seed) = seed {
        pairs.push(("seed", seed.to_string()));
    }
    formats::write_report(&out_dir.join("run.meta"), &pairs)?;
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    formats::atomic_write(&out_dir.join("run.log"), format!("finished_unix={now}\n").as_bytes())
}

/// Frame-level dataset split along utterance boundaries.
pub(crate) struct FrameSplit {
    pub train: (Matrix<f64>, Vec<u32>),
    pub dev: Option<(Matrix<f64>, Vec<u32>)>,
    pub test: (Matrix<f64>, Vec<u32>),
    pub classes: usize,
}

fn flatten(corpus: &Corpus<f64>, idxs: &[usize]) -> (Matrix<f64>, Vec<u32>) {
    let dim = corpus.utterances[idxs[0]].dim();
    let total: usize = idxs.iter().map(|&i| corpus.utterances[i].len()).sum();
    let mut x = Matrix::zeros(total, dim);
    let mut y = Vec::with_capacity(total);
    let mut row = 0;
    for &i in idxs {
        let seq = &corpus.utterances[i];
        for t in 0..seq.len() {
            x.copy_row_from(row, &seq.frames, t);
            row += 1;
        }
        y.extend_from_slice(seq.labels.as_ref().unwrap());
    }
    (x, y)
}

/// Shuffles utterances with the given seed and splits them into train, dev
/// (possibly empty), and test frame sets. Speakers stay shared across
/// splits; utterances do not. Every utterance must carry labels.
pub(crate) fn split_by_utterance(
    corpus: &Corpus<f64>,
    train_frac: f64,
    dev_frac: f64,
    seed: u64,
) -> Result<FrameSplit> {
    if !(train_frac > 0.0 && dev_frac >= 0.0 && train_frac + dev_frac < 1.0) {
        return Err(CliError::Config(format!(
            "need train_frac > 0, dev_frac >= 0, sum < 1; got {train_frac} and {dev_frac}"
        )));
    }
    let mut classes = 0u32;
    for seq in &corpus.utterances {
        let labels = seq.labels.as_ref().ok_or_else(|| {
            CliError::Config(format!(
                "utterance {} has no labels; phone probing needs labeled features",
                seq.utterance_id
            ))
        })?;
        for &l in labels {
            classes = classes.max(l + 1);
        }
    }
    let n = corpus.len();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = SeededRng::new(seed);
    rng.shuffle(&mut idx);
    let n_train = ((n as f64 * train_frac).round() as usize).clamp(1, n - 1);
    let n_dev = ((n as f64 * dev_frac).round() as usize).min(n - 1 - n_train);
    if n_train + n_dev >= n {
        return Err(CliError::Config(format!(
            "{n} utterances leave no test split at train_frac {train_frac}, dev_frac {dev_frac}"
        )));
    }
    let dev_idx = &idx[n_train..n_train + n_dev];
    Ok(FrameSplit {
        train: flatten(corpus, &idx[..n_train]),
        dev: if dev_idx.is_empty() { None } else { Some(flatten(corpus, dev_idx)) },
        test: flatten(corpus, &idx[n_train + n_dev..]),
        classes: classes as usize,
    })
}

/// Parses a comma-separated list of positive integers, e.g. "1,2,3,5".
pub(crate) fn parse_usize_list(key: &str, s: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        let v = part
            .parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| {
                CliError::Config(format!("config key {key}: bad list entry {part:?}"))
            })?;
        out.push(v);
    }
    Ok(out)
}

/// Parses a key=value report or sidecar file back into a map.
pub(crate) fn load_report(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::from_io(path, e))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Parse(format!("{}: line {}: expected key=value", path.display(), i + 1))
        })?;
        map.insert(k.to_string(), v.to_string());
    }
    Ok(map)
}

pub(crate) fn report_field<'a>(
    map: &'a BTreeMap<String, String>,
    path: &Path,
    key: &str,
) -> Result<&'a str> {
    map.get(key).map(String::as_str).ok_or_else(|| {
        CliError::Parse(format!("{}: missing field {key}", path.display()))
    })
}
