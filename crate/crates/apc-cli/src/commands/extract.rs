//! extract: run a trained checkpoint over a manifest and write the learned
//! representations as a new feature directory.
//!
//! The checkpoint's .meta sidecar says how to reattach the tensors, and the
//! norm.stats saved beside the checkpoint reproduces the training-time
//! normalization on this corpus. Labels and speaker metadata carry through,
//! so probe commands run unchanged on extracted features.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use apc_core::apc::{ApcConfig, ApcModel};
use apc_core::cpc::{CpcModel, CpcVariant, Tap};
use apc_core::data::{apply_norm, Corpus, FeatureSequence};

use crate::config::{freeze, resolve_out};
use crate::error::{CliError, Result};
use crate::formats;

use super::{load_report, report_field, write_feature_dir, write_run_records};

pub struct ExtractArgs {
    pub checkpoint: PathBuf,
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    pub layer: Option<usize>,
    pub tap: Option<String>,
}

fn meta_parse<T: FromStr>(
    meta: &BTreeMap<String, String>,
    path: &Path,
    key: &str,
) -> Result<T> {
    let raw = report_field(meta, path, key)?;
    raw.parse::<T>().map_err(|_| {
        CliError::Parse(format!("{}: field {key}: cannot parse {raw:?}", path.display()))
    })
}

pub fn run(args: &ExtractArgs) -> Result<()> {
    let meta_path = args.checkpoint.with_extension("meta");
    let meta = load_report(&meta_path)?;
    let store = formats::load_checkpoint(&args.checkpoint)?;
    let (mut corpus, _) = formats::load_corpus(&args.manifest)?;
    let stats_dir = args.checkpoint.parent().unwrap_or_else(|| Path::new(""));
    let stats = formats::load_norm_stats(&stats_dir.join("norm.stats"))?;
    apply_norm(&mut corpus, &stats).map_err(CliError::from)?;

    let kind = report_field(&meta, &meta_path, "kind")?.to_string();
    let mut effective = BTreeMap::new();
    effective.insert("extract.kind".to_string(), kind.clone());
    effective.insert(
        "extract.source_hash".to_string(),
        report_field(&meta, &meta_path, "config_hash")?.to_string(),
    );

    let mut out: Corpus<f64> = Corpus::new();
    out.genders = corpus.genders.clone();
    let describe;
    match kind.as_str() {
        "apc" => {
            if args.tap.is_some() {
                return Err(CliError::Usage("--tap applies only to cpc checkpoints".into()));
            }
            let cfg = ApcConfig {
                input_dim: meta_parse(&meta, &meta_path, "input_dim")?,
                hidden: meta_parse(&meta, &meta_path, "hidden")?,
                layers: meta_parse(&meta, &meta_path, "layers")?,
                residual: meta_parse(&meta, &meta_path, "residual")?,
            };
            let layer = args.layer.unwrap_or(cfg.layers);
            let model = ApcModel::attach(&store, cfg).map_err(CliError::from)?;
            for seq in &corpus.utterances {
                let frames = model.extract(&store, &seq.frames, layer).map_err(CliError::from)?;
                out.utterances.push(FeatureSequence {
                    utterance_id: seq.utterance_id.clone(),
                    speaker_id: seq.speaker_id.clone(),
                    frames,
                    labels: seq.labels.clone(),
                });
            }
            effective.insert("extract.layer".to_string(), layer.to_string());
            describe = format!("layer={layer}");
        }
        "cpc" => {
            if args.layer.is_some() {
                return Err(CliError::Usage("--layer applies only to apc checkpoints".into()));
            }
            let tap = match args.tap.as_deref() {
                None | Some("context") => Tap::Context,
                Some("frame") => Tap::Frame,
                Some(other) => {
                    return Err(CliError::Usage(format!(
                        "unknown tap {other:?}, expected frame or context"
                    )))
                }
            };
            let variant_str = report_field(&meta, &meta_path, "variant")?;
            let variant = CpcVariant::parse(variant_str).ok_or_else(|| {
                CliError::Parse(format!(
                    "{}: unknown variant {variant_str:?}",
                    meta_path.display()
                ))
            })?;
            let cfg = apc_core::cpc::CpcConfig {
                input_dim: meta_parse(&meta, &meta_path, "input_dim")?,
                enc_dim: meta_parse(&meta, &meta_path, "enc_dim")?,
                n_steps: meta_parse(&meta, &meta_path, "n_steps")?,
                variant,
            };
            let model = CpcModel::attach(&store, cfg).map_err(CliError::from)?;
            let tap_name = match tap {
                Tap::Frame => "frame",
                Tap::Context => "context",
            };
            for seq in &corpus.utterances {
                let frames = model.extract(&store, &seq.frames, tap).map_err(CliError::from)?;
                out.utterances.push(FeatureSequence {
                    utterance_id: seq.utterance_id.clone(),
                    speaker_id: seq.speaker_id.clone(),
                    frames,
                    labels: seq.labels.clone(),
                });
            }
            effective.insert("extract.tap".to_string(), tap_name.to_string());
            describe = format!("tap={tap_name}");
        }
        other => {
            return Err(CliError::Parse(format!(
                "{}: unknown checkpoint kind {other:?}",
                meta_path.display()
            )))
        }
    }

    let out_dir = resolve_out(&args.out_dir);
    let manifest = write_feature_dir(&out_dir, &out)?;
    write_run_records(&out_dir, "extract", &freeze(&effective), None)?;
    println!(
        "command=extract kind={kind} {describe} utterances={} manifest={}",
        out.len(),
        manifest.display()
    );
    Ok(())
}
