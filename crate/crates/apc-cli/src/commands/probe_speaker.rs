//! probe-speaker: score same/different-speaker trials with LDA-projected
//! mean embeddings and cosine similarity, reporting the equal error rate.
//!
//! Trials are built from the manifest (seeded, same-gender pairs) unless a
//! trial file is supplied: one `utt_a<TAB>utt_b<TAB>target|nontarget` line
//! per trial.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use apc_core::data::Corpus;
use apc_core::probes::{build_trials, compute_eer, cosine_score, fit_lda, utterance_embed};

use crate::config::{resolve_out, Settings};
use crate::error::{CliError, Result};
use crate::formats::{atomic_write, load_corpus, write_report};

pub struct ProbeSpeakerArgs {
    pub manifest: PathBuf,
    pub report: PathBuf,
    pub trials: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub sets: Vec<String>,
}

/// (utt_a, utt_b, same_speaker) with both ids resolved against the corpus.
fn load_trial_pairs(
    path: &Path,
    by_id: &BTreeMap<&str, usize>,
) -> Result<Vec<(String, String, bool)>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::from_io(path, e))?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fail = |what: String| {
            CliError::Parse(format!("{}: line {}: {what}", path.display(), i + 1))
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(fail(format!("{} fields, expected 3", fields.len())));
        }
        for utt in &fields[..2] {
            if !by_id.contains_key(utt) {
                return Err(fail(format!("unknown utterance {utt}")));
            }
        }
        let same = match fields[2] {
            "target" => true,
            "nontarget" => false,
            other => return Err(fail(format!("bad trial label {other:?}"))),
        };
        pairs.push((fields[0].to_string(), fields[1].to_string(), same));
    }
    if pairs.is_empty() {
        return Err(CliError::Parse(format!("{}: no trials", path.display())));
    }
    Ok(pairs)
}

fn gather_pairs(
    args: &ProbeSpeakerArgs,
    corpus: &Corpus<f64>,
    by_id: &BTreeMap<&str, usize>,
    seed: u64,
    max_per_speaker: usize,
) -> Result<Vec<(String, String, bool)>> {
    match &args.trials {
        Some(path) => load_trial_pairs(path, by_id),
        None => {
            let list = build_trials(corpus, seed, max_per_speaker).map_err(CliError::from)?;
            Ok(list
                .trials
                .into_iter()
                .map(|t| (t.utt_a, t.utt_b, t.same_speaker))
                .collect())
        }
    }
}

pub fn run(args: &ProbeSpeakerArgs) -> Result<()> {
    let (corpus, _) = load_corpus(&args.manifest)?;

    let mut s = Settings::load(args.config.as_deref(), &args.sets)?;
    let lda_dim = s.get("speaker.lda_dim", 24usize)?;
    let max_per_speaker = s.get("speaker.max_per_speaker", 20usize)?;
    let seed = s.get("speaker.seed", 0u64)?;
    let frozen = s.finish()?;

    let speakers = corpus.speakers();
    if speakers.len() < 2 {
        return Err(CliError::Config(format!(
            "speaker verification needs at least 2 speakers, got {}",
            speakers.len()
        )));
    }
    let spk_index: BTreeMap<&str, usize> =
        speakers.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let by_id: BTreeMap<&str, usize> = corpus
        .utterances
        .iter()
        .enumerate()
        .map(|(i, u)| (u.utterance_id.as_str(), i))
        .collect();

    let dim = corpus.dim().map_err(CliError::from)?;
    let mut embeds = apc_core::Matrix::<f64>::zeros(corpus.len(), dim);
    let mut labels = Vec::with_capacity(corpus.len());
    for (i, seq) in corpus.utterances.iter().enumerate() {
        let e = utterance_embed(&seq.frames).map_err(CliError::from)?;
        embeds.row_mut(i).copy_from_slice(&e);
        labels.push(spk_index[seq.speaker_id.as_str()]);
    }
    let p = lda_dim.min(speakers.len() - 1).min(dim);
    let lda = fit_lda(&embeds, &labels, p).map_err(CliError::from)?;
    let projected: Vec<Vec<f64>> = (0..corpus.len())
        .map(|i| lda.project(embeds.row(i)))
        .collect::<apc_core::Result<_>>()
        .map_err(CliError::from)?;

    let pairs = gather_pairs(args, &corpus, &by_id, seed, max_per_speaker)?;
    let mut target = Vec::new();
    let mut nontarget = Vec::new();
    let mut score_lines = String::new();
    for (utt_a, utt_b, same) in &pairs {
        let score = cosine_score(&projected[by_id[utt_a.as_str()]], &projected[by_id[utt_b.as_str()]]);
        if *same {
            target.push(score);
        } else {
            nontarget.push(score);
        }
        let label = if *same { "target" } else { "nontarget" };
        writeln!(score_lines, "{utt_a}\t{utt_b}\t{score}\t{label}").unwrap();
    }
    let eer = compute_eer(&target, &nontarget).map_err(CliError::from)?;

    if let Some(scores) = &args.scores {
        atomic_write(&resolve_out(scores), score_lines.as_bytes())?;
    }
    let report = resolve_out(&args.report);
    write_report(
        &report,
        &[
            ("command", "probe-speaker".to_string()),
            ("speakers", speakers.len().to_string()),
            ("trials", pairs.len().to_string()),
            ("n_target", eer.n_target.to_string()),
            ("n_nontarget", eer.n_nontarget.to_string()),
            ("lda_dim", p.to_string()),
            ("eer", eer.eer.to_string()),
            ("threshold", eer.threshold.to_string()),
            ("config_hash", frozen.hash.clone()),
            ("seed", seed.to_string()),
        ],
    )?;
    println!(
        "command=probe-speaker trials={} eer={} report={}",
        pairs.len(),
        eer.eer,
        report.display()
    );
    Ok(())
}
