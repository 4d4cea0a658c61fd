//! featurize: turn a directory of WAV files into log-Mel feature files.
//!
//! Utterance ids are file stems; the speaker id is the stem up to the first
//! underscore. Speaker genders come from a required `speakers.tsv` in the
//! wave directory (speaker_id<TAB>F|M per line).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use apc_core::data::{Corpus, FeatureSequence, Gender};

use crate::config::{resolve_out, Settings};
use crate::error::{CliError, Result};
use crate::frontend::{log_mel, read_wav, MelConfig, SAMPLE_RATE};

use super::{write_feature_dir, write_run_records};

fn load_speakers(path: &Path) -> Result<BTreeMap<String, Gender>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::from_io(path, e))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fail = |what: String| {
            CliError::Parse(format!("{}: line {}: {what}", path.display(), i + 1))
        };
        let (id, g) = line
            .split_once('\t')
            .ok_or_else(|| fail("expected speaker_id<TAB>gender".into()))?;
        let gender = Gender::parse(g.trim())
            .ok_or_else(|| fail(format!("unknown gender {:?}", g.trim())))?;
        if map.insert(id.trim().to_string(), gender).is_some() {
            return Err(fail(format!("duplicate speaker {}", id.trim())));
        }
    }
    Ok(map)
}

pub fn run(
    wave_dir: &Path,
    out_dir: &Path,
    config: Option<&Path>,
    sets: &[String],
) -> Result<()> {
    let mut s = Settings::load(config, sets)?;
    let d = MelConfig::default();
    let mel = MelConfig {
        window: s.get("mel.window", d.window)?,
        hop: s.get("mel.hop", d.hop)?,
        fft_size: s.get("mel.fft_size", d.fft_size)?,
        n_mels: s.get("mel.n_mels", d.n_mels)?,
        fmin: s.get("mel.fmin", d.fmin)?,
        fmax: s.get("mel.fmax", d.fmax)?,
        log_floor: s.get("mel.log_floor", d.log_floor)?,
    };
    let frozen = s.finish()?;
    mel.validate(SAMPLE_RATE)?;

    let genders = load_speakers(&wave_dir.join("speakers.tsv"))?;
    let mut waves: Vec<PathBuf> = std::fs::read_dir(wave_dir)
        .map_err(|e| CliError::from_io(wave_dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "wav"))
        .collect();
    waves.sort();
    if waves.is_empty() {
        return Err(CliError::MissingInput(format!(
            "{}: no .wav files",
            wave_dir.display()
        )));
    }

    let mut corpus: Corpus<f64> = Corpus::new();
    for path in &waves {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .filter(|s| !s.is_empty())
            .ok_or_else(|| CliError::Parse(format!("{}: unusable file name", path.display())))?;
        let speaker = stem.split('_').next().unwrap().to_string();
        let gender = *genders.get(&speaker).ok_or_else(|| {
            CliError::Parse(format!("speakers.tsv does not list speaker {speaker}"))
        })?;
        let wave = read_wav(path)?;
        let frames = log_mel(&wave, &mel)?;
        corpus.genders.insert(speaker.clone(), gender);
        corpus.utterances.push(FeatureSequence {
            utterance_id: stem,
            speaker_id: speaker,
            frames,
            labels: None,
        });
    }

    let out_dir = resolve_out(out_dir);
    let manifest = write_feature_dir(&out_dir, &corpus)?;
    write_run_records(&out_dir, "featurize", &frozen, None)?;
    println!(
        "command=featurize utterances={} frames={} manifest={}",
        corpus.len(),
        corpus.total_frames(),
        manifest.display()
    );
    Ok(())
}
