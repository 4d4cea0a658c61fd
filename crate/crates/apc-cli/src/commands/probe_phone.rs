//! probe-phone: train a frozen-feature phone classifier and report its
//! frame error rate on a held-out utterance split.

use std::path::PathBuf;

use apc_core::probes::{frame_error_rate, train_probe, ProbeKind, ProbeTrainConfig};

use crate::config::{resolve_out, Settings};
use crate::error::{CliError, Result};
use crate::formats::{load_corpus, write_report};

use super::split_by_utterance;

pub struct ProbePhoneArgs {
    pub manifest: PathBuf,
    pub probe: String,
    pub report: PathBuf,
    pub config: Option<PathBuf>,
    pub sets: Vec<String>,
}

pub fn run(args: &ProbePhoneArgs) -> Result<()> {
    let kind = ProbeKind::parse(&args.probe).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown probe {:?}, expected linear, mlp1, or mlp3",
            args.probe
        ))
    })?;
    let (corpus, _) = load_corpus(&args.manifest)?;

    let mut s = Settings::load(args.config.as_deref(), &args.sets)?;
    let cfg = ProbeTrainConfig {
        epochs: s.get("probe.epochs", 50usize)?,
        lr: s.get("probe.lr", 1e-3f64)?,
        batch_frames: s.get("probe.batch_frames", 256usize)?,
        seed: s.get("probe.seed", 0u64)?,
    };
    let train_frac = s.get("probe.train_frac", 0.8f64)?;
    let dev_frac = s.get("probe.dev_frac", 0.1f64)?;
    let frozen = s.finish()?;

    let split = split_by_utterance(&corpus, train_frac, dev_frac, cfg.seed)?;
    let dev = split.dev.as_ref().map(|(x, y)| (x, y.as_slice()));
    let probe = train_probe(
        &split.train.0,
        &split.train.1,
        dev,
        kind,
        split.classes,
        &cfg,
    )
    .map_err(CliError::from)?;
    let fer = frame_error_rate(&probe, &split.test.0, &split.test.1).map_err(CliError::from)?;

    let report = resolve_out(&args.report);
    write_report(
        &report,
        &[
            ("command", "probe-phone".to_string()),
            ("probe", kind.as_str().to_string()),
            ("classes", split.classes.to_string()),
            ("train_frames", split.train.1.len().to_string()),
            ("dev_frames", split.dev.as_ref().map_or(0, |(_, y)| y.len()).to_string()),
            ("test_frames", split.test.1.len().to_string()),
            ("frame_error_rate", fer.to_string()),
            ("accuracy", (1.0 - fer).to_string()),
            ("config_hash", frozen.hash.clone()),
            ("seed", cfg.seed.to_string()),
        ],
    )?;
    println!(
        "command=probe-phone probe={} frame_error_rate={fer} report={}",
        kind.as_str(),
        report.display()
    );
    Ok(())
}
