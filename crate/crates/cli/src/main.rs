mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::parse_param;

#[derive(Parser, Debug)]
#[command(name = "hiertag", version, about = "Hierarchical event tagging: data tools, training, scoring and experiments")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

/// Config file plus `key=value` overrides shared by configurable commands.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// Flat key=value file, or a manifest.json from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key (repeatable).
    #[arg(short = 'p', long = "param", value_name = "KEY=VALUE", value_parser = parse_param)]
    pub params: Vec<(String, String)>,
    /// Seed; falls back to the config, then to HIERTAG_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic train, negative-pool and test corpora.
    GenSynth {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Derive sentence and document labels from token annotations.
    DeriveCoarse {
        #[arg(long)]
        corpus: PathBuf,
        /// Drop token labels after deriving, leaving coarse supervision only.
        #[arg(long)]
        coarse_only: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check corpora and, optionally, a training config.
    Validate {
        #[arg(long = "corpus", required_unless_present = "config")]
        corpora: Vec<PathBuf>,
        /// Training config to resolve and check.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train one model and keep the checkpoint with the best dev F1.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// Held-out annotated documents; split from the corpus when absent.
        #[arg(long)]
        dev: Option<PathBuf>,
        /// baseline, sent, doc or sent+doc.
        #[arg(long)]
        variation: Option<String>,
        /// Model size preset: tiny, desk or full.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on an annotated corpus.
    Score {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Directory for scores.tsv and a manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every cell of an experiment set.
    Experiment {
        /// 1, 2, 3, 3.1 or 3.2.
        #[arg(long = "set")]
        set: Option<String>,
        /// Directory holding train.jsonl, negatives.jsonl and test.jsonl.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        negatives: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        /// Repeats per cell.
        #[arg(long)]
        seeds: Option<usize>,
        /// Cells trained in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Set-1 records whose baseline and sent cells complete a set-2 table.
        #[arg(long)]
        reuse: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild the table and chart from record files.
    Plot {
        #[arg(long = "records", required = true)]
        records: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::GenSynth { cfg, out } => commands::gen_synth(&cfg, &out),
        Command::DeriveCoarse { corpus, coarse_only, out } => commands::derive_coarse(&corpus, coarse_only, &out),
        Command::Validate { corpora, config } => commands::validate(&corpora, config.as_deref()),
        Command::Train {
            corpus,
            dev,
            variation,
            preset,
            epochs,
            cfg,
            out,
        } => commands::train(
            &commands::TrainArgs {
                corpus,
                dev,
                variation,
                preset,
                epochs,
                cfg,
            },
            &out,
        ),
        Command::Score { checkpoint, corpus, out } => commands::score(&checkpoint, &corpus, out.as_deref()),
        Command::Experiment {
            set,
            data,
            corpus,
            negatives,
            test,
            seeds,
            jobs,
            reuse,
            cfg,
            out,
        } => commands::experiment(
            &commands::ExperimentArgs {
                set,
                data,
                corpus,
                negatives,
                test,
                seeds,
                jobs,
                reuse,
                cfg,
            },
            &out,
        ),
        Command::Plot { records, out } => commands::plot(&records, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
