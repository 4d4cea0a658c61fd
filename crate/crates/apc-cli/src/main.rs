use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use apc_cli::commands::{
    self, extract::ExtractArgs, probe_phone::ProbePhoneArgs, probe_speaker::ProbeSpeakerArgs,
    sweep::SweepArgs, train::TrainArgs,
};
use apc_cli::CliError;

#[derive(Parser)]
#[command(
    name = "apc",
    version,
    about = "Train and evaluate predictive-coding speech representations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic corpus as feature files + manifest.
    GenSynth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// Convert a directory of 16 kHz mono WAV files to log-Mel features.
    Featurize {
        #[arg(long)]
        wave_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// Train a model on a feature manifest.
    Train {
        /// Model family: apc or cpc.
        kind: String,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also write loss.svg with the training curve.
        #[arg(long)]
        plot: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// Write learned representations for every utterance in a manifest.
    Extract {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// APC layer to tap, 1-based (default: last layer).
        #[arg(long)]
        layer: Option<usize>,
        /// CPC tap: frame or context (default: context).
        #[arg(long)]
        tap: Option<String>,
    },
    /// Train a phone classifier on frozen features; report frame error rate.
    ProbePhone {
        #[arg(long)]
        manifest: PathBuf,
        /// Classifier shape: linear, mlp1, or mlp3.
        #[arg(long, default_value = "linear")]
        probe: String,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// Score speaker-verification trials; report equal error rate.
    ProbeSpeaker {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Trial file (utt_a<TAB>utt_b<TAB>target|nontarget); default: built
        /// from the manifest with speaker.seed.
        #[arg(long)]
        trials: Option<PathBuf>,
        /// Also write per-trial scores to this path.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// Train and linear-probe an APC grid over prediction steps and layers.
    Sweep {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
}

fn dispatch(cmd: Command) -> apc_cli::Result<()> {
    match cmd {
        Command::GenSynth { out_dir, config, sets } => {
            commands::gen_synth::run(&out_dir, config.as_deref(), &sets)
        }
        Command::Featurize { wave_dir, out_dir, config, sets } => {
            commands::featurize::run(&wave_dir, &out_dir, config.as_deref(), &sets)
        }
        Command::Train { kind, manifest, out_dir, plot, config, sets } => {
            commands::train::run(&TrainArgs { kind, manifest, out_dir, plot, config, sets })
        }
        Command::Extract { checkpoint, manifest, out_dir, layer, tap } => {
            commands::extract::run(&ExtractArgs { checkpoint, manifest, out_dir, layer, tap })
        }
        Command::ProbePhone { manifest, probe, report, config, sets } => {
            commands::probe_phone::run(&ProbePhoneArgs { manifest, probe, report, config, sets })
        }
        Command::ProbeSpeaker { manifest, report, trials, scores, config, sets } => {
            commands::probe_speaker::run(&ProbeSpeakerArgs {
                manifest,
                report,
                trials,
                scores,
                config,
                sets,
            })
        }
        Command::Sweep { manifest, out_dir, config, sets } => {
            commands::sweep::run(&SweepArgs { manifest, out_dir, config, sets })
        }
    }
}

/// One machine-parsable diagnostic line, then the command's exit code.
fn fail(err: &CliError) -> ExitCode {
    eprintln!("error category={} message={:?}", err.category(), err.to_string());
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ => fail(&CliError::Usage(e.to_string().trim().to_string())),
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
