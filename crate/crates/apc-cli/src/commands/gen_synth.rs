//! gen-synth: emit a labeled synthetic corpus as feature files + manifest.

use std::path::Path;

use apc_core::data::{gen_synthetic_corpus, Corpus, SynthConfig};

use crate::config::{resolve_out, Settings};
use crate::error::Result;

use super::{write_feature_dir, write_run_records};

pub fn run(out_dir: &Path, config: Option<&Path>, sets: &[String]) -> Result<()> {
    let mut s = Settings::load(config, sets)?;
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        n_speakers: s.get("synth.n_speakers", d.n_speakers)?,
        n_phones: s.get("synth.n_phones", d.n_phones)?,
        utterances_per_speaker: s.get("synth.utterances_per_speaker", d.utterances_per_speaker)?,
        frames_per_utterance: s.get("synth.frames_per_utterance", d.frames_per_utterance)?,
        feature_dim: s.get("synth.feature_dim", d.feature_dim)?,
        phone_dwell: s.get("synth.phone_dwell", d.phone_dwell)?,
        speaker_offset_scale: s.get("synth.speaker_offset_scale", d.speaker_offset_scale)?,
        noise_sigma: s.get("synth.noise_sigma", d.noise_sigma)?,
        temporal_smoothing: s.get("synth.temporal_smoothing", d.temporal_smoothing)?,
        seed: s.get("synth.seed", d.seed)?,
    };
    let frozen = s.finish()?;
    let corpus: Corpus<f64> = gen_synthetic_corpus(&cfg)?;
    let out_dir = resolve_out(out_dir);
    let manifest = write_feature_dir(&out_dir, &corpus)?;
    write_run_records(&out_dir, "gen-synth", &frozen, Some(cfg.seed))?;
    println!(
        "command=gen-synth utterances={} frames={} manifest={}",
        corpus.len(),
        corpus.total_frames(),
        manifest.display()
    );
    Ok(())
}
