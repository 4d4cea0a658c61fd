//! sweep: train one APC model per prediction horizon, probe every requested
//! layer with a linear phone classifier, and emit the grid as one
//! machine-readable row per (n, layer) cell.

use std::fmt::Write as _;
use std::path::PathBuf;

use apc_core::apc::{train_apc, ApcConfig, ApcModel, ApcTrainConfig};
use apc_core::data::{normalize_corpus, Corpus, FeatureSequence, NormalizationMode};
use apc_core::probes::{frame_error_rate, train_probe, ProbeKind, ProbeTrainConfig};
use apc_core::ParamStore;

use crate::config::{resolve_out, Settings};
use crate::error::{CliError, Result};
use crate::formats::{atomic_write, load_corpus};

use super::{parse_usize_list, split_by_utterance, write_run_records};

pub struct SweepArgs {
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    pub config: Option<PathBuf>,
    pub sets: Vec<String>,
}

fn extract_layer(
    model: &ApcModel,
    store: &ParamStore<f64>,
    corpus: &Corpus<f64>,
    layer: usize,
) -> Result<Corpus<f64>> {
    let mut out = Corpus::new();
    out.genders = corpus.genders.clone();
    for seq in &corpus.utterances {
        out.utterances.push(FeatureSequence {
            utterance_id: seq.utterance_id.clone(),
            speaker_id: seq.speaker_id.clone(),
            frames: model.extract(store, &seq.frames, layer).map_err(CliError::from)?,
            labels: seq.labels.clone(),
        });
    }
    Ok(out)
}

pub fn run(args: &SweepArgs) -> Result<()> {
    let (mut corpus, _) = load_corpus(&args.manifest)?;
    let input_dim = corpus.dim().map_err(CliError::from)?;

    let mut s = Settings::load(args.config.as_deref(), &args.sets)?;
    let n_list = parse_usize_list("sweep.n_steps", &s.get("sweep.n_steps", "1,2,3,5".to_string())?)?;
    let layer_list = parse_usize_list("sweep.layers", &s.get("sweep.layers", "1,2,3".to_string())?)?;
    let hidden = s.get("sweep.hidden", 64usize)?;
    let epochs = s.get("sweep.epochs", 5usize)?;
    let batch_size = s.get("sweep.batch_size", 32usize)?;
    let lr = s.get("sweep.lr", 1e-3f64)?;
    let seed = s.get("sweep.seed", 0u64)?;
    let mode_str =
        s.get_choice("sweep.normalization", "per_speaker", &["per_speaker", "global"])?;
    let probe_cfg = ProbeTrainConfig {
        epochs: s.get("sweep.probe_epochs", 30usize)?,
        lr: s.get("sweep.probe_lr", 1e-3f64)?,
        batch_frames: s.get("sweep.probe_batch_frames", 256usize)?,
        seed,
    };
    let train_frac = s.get("sweep.train_frac", 0.8f64)?;
    let dev_frac = s.get("sweep.dev_frac", 0.1f64)?;
    let frozen = s.finish()?;

    let depth = *layer_list.iter().max().unwrap();
    let mode = NormalizationMode::parse(&mode_str).unwrap();
    normalize_corpus(&mut corpus, mode).map_err(CliError::from)?;

    let mut rows = String::new();
    let mut row = 0;
    for &n in &n_list {
        let cfg = ApcTrainConfig {
            model: ApcConfig { input_dim, hidden, layers: depth, residual: true },
            n_steps: n,
            epochs,
            batch_size,
            lr,
            seed,
        };
        let trained = train_apc(&corpus, &cfg).map_err(CliError::from)?;
        for &layer in &layer_list {
            let features = extract_layer(&trained.model, &trained.store, &corpus, layer)?;
            let split = split_by_utterance(&features, train_frac, dev_frac, seed)?;
            let dev = split.dev.as_ref().map(|(x, y)| (x, y.as_slice()));
            let probe = train_probe(
                &split.train.0,
                &split.train.1,
                dev,
                ProbeKind::Linear,
                split.classes,
                &probe_cfg,
            )
            .map_err(CliError::from)?;
            let fer = frame_error_rate(&probe, &split.test.0, &split.test.1)
                .map_err(CliError::from)?;
            row += 1;
            let line = format!("row={row} model=apc n={n} layer={layer} frame_error_rate={fer}");
            println!("{line}");
            writeln!(rows, "{line}").unwrap();
        }
    }

    let out_dir = resolve_out(&args.out_dir);
    let report = out_dir.join("sweep.txt");
    atomic_write(&report, rows.as_bytes())?;
    write_run_records(&out_dir, "sweep", &frozen, Some(seed))?;
    println!("command=sweep rows={row} report={}", report.display());
    Ok(())
}
