//! train: fit an APC or CPC model on a feature manifest.
//!
//! Normalization stats are computed on the training corpus, applied before
//! training, and saved next to the checkpoint for reuse at extraction time.
//! The checkpoint itself holds only tensors; a key=value sidecar
//! (checkpoint.meta) records the architecture needed to reattach them.

use std::path::PathBuf;

use apc_core::apc::{train_apc, ApcConfig, ApcTrainConfig};
use apc_core::cpc::{train_cpc, CpcConfig, CpcTrainConfig, CpcVariant};
use apc_core::data::{normalize_corpus, NormStats, NormalizationMode};
use apc_core::ParamStore;

use crate::config::{resolve_out, FrozenConfig, Settings};
use crate::error::{CliError, Result};
use crate::formats;

use super::write_run_records;

pub struct TrainArgs {
    pub kind: String,
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    pub plot: bool,
    pub config: Option<PathBuf>,
    pub sets: Vec<String>,
}

struct Outputs {
    store: ParamStore<f64>,
    history: Vec<f64>,
    meta: Vec<(&'static str, String)>,
    stats: NormStats,
    seed: u64,
    frozen: FrozenConfig,
}

fn train_kind(args: &TrainArgs) -> Result<Outputs> {
    let (mut corpus, _) = formats::load_corpus(&args.manifest)?;
    let input_dim = corpus.dim().map_err(CliError::from)?;

    let mut s = Settings::load(args.config.as_deref(), &args.sets)?;
    let mode_str =
        s.get_choice("data.normalization", "per_speaker", &["per_speaker", "global"])?;
    let mode = NormalizationMode::parse(&mode_str).unwrap();
    let epochs = s.get("train.epochs", 100usize)?;
    let batch_size = s.get("train.batch_size", 32usize)?;
    let lr = s.get("train.lr", 1e-3f64)?;
    let seed = s.get("train.seed", 0u64)?;

    match args.kind.as_str() {
        "apc" => {
            let model = ApcConfig {
                input_dim,
                hidden: s.get("model.hidden", 512usize)?,
                layers: s.get("model.layers", 3usize)?,
                residual: s.get("model.residual", true)?,
            };
            let n_steps = s.get("model.n_steps", 3usize)?;
            let frozen = s.finish()?;
            let stats = normalize_corpus(&mut corpus, mode).map_err(CliError::from)?;
            let cfg =
                ApcTrainConfig { model, n_steps, epochs, batch_size, lr, seed };
            let trained = train_apc(&corpus, &cfg).map_err(CliError::from)?;
            let meta = vec![
                ("kind", "apc".to_string()),
                ("input_dim", input_dim.to_string()),
                ("hidden", cfg.model.hidden.to_string()),
                ("layers", cfg.model.layers.to_string()),
                ("residual", cfg.model.residual.to_string()),
                ("n_steps", n_steps.to_string()),
                ("normalization", mode_str),
                ("config_hash", frozen.hash.clone()),
                ("seed", seed.to_string()),
            ];
            Ok(Outputs { store: trained.store, history: trained.history, meta, stats, seed, frozen })
        }
        "cpc" => {
            let variant_str = s.get_choice(
                "model.variant",
                "n9same",
                &["n9all", "n9same", "ctx_n9same", "ctx_exhaust"],
            )?;
            let variant = CpcVariant::parse(&variant_str).unwrap();
            let model = CpcConfig {
                input_dim,
                enc_dim: s.get("model.enc_dim", 512usize)?,
                n_steps: s.get("model.n_steps", 3usize)?,
                variant,
            };
            let cfg = CpcTrainConfig {
                model,
                epochs,
                batch_size,
                lr,
                k_negatives: s.get("train.k_negatives", 9usize)?,
                chunk_len: s.get("train.chunk_len", 128usize)?,
                pad_short: s.get("train.pad_short", true)?,
                seed,
            };
            let frozen = s.finish()?;
            let stats = normalize_corpus(&mut corpus, mode).map_err(CliError::from)?;
            let trained = train_cpc(&corpus, &cfg).map_err(CliError::from)?;
            let meta = vec![
                ("kind", "cpc".to_string()),
                ("input_dim", input_dim.to_string()),
                ("enc_dim", cfg.model.enc_dim.to_string()),
                ("n_steps", cfg.model.n_steps.to_string()),
                ("variant", variant_str),
                ("normalization", mode_str),
                ("config_hash", frozen.hash.clone()),
                ("seed", seed.to_string()),
            ];
            Ok(Outputs { store: trained.store, history: trained.history, meta, stats, seed, frozen })
        }
        other => Err(CliError::Usage(format!("unknown train kind {other:?}, expected apc or cpc"))),
    }
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let out = train_kind(args)?;
    let out_dir = resolve_out(&args.out_dir);
    let ckpt = out_dir.join("checkpoint.ckpt");
    formats::save_checkpoint(&ckpt, &out.store)?;
    formats::write_report(&ckpt.with_extension("meta"), &out.meta)?;
    formats::save_norm_stats(&out_dir.join("norm.stats"), &out.stats)?;
    formats::write_history(&out_dir.join("history.txt"), &out.history)?;
    if args.plot {
        formats::atomic_write(&out_dir.join("loss.svg"), formats::history_svg(&out.history).as_bytes())?;
    }
    write_run_records(&out_dir, "train", &out.frozen, Some(out.seed))?;
    let last = out.history.last().copied().unwrap_or(f64::NAN);
    println!(
        "command=train kind={} epochs={} final_loss={} checkpoint={}",
        args.kind,
        out.history.len(),
        last,
        ckpt.display()
    );
    Ok(())
}
