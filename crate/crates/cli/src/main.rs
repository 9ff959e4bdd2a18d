//! `decnn`: train and run the dual-embedding CNN aspect extractor.
//!
//! Exit codes: 0 success, 1 internal error, 2 usage/data error.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use decnn_core::embeddings::EmbMode;
use decnn_core::{Error, Result};

use commands::PredictFormat;
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "decnn",
    version,
    about = "Aspect term extraction with a dual-embedding CNN sequence labeler"
)]
struct Cli {
    /// TOML run configuration (defaults to $DECNN_CONFIG).
    #[arg(long, global = true, env = "DECNN_CONFIG")]
    config: Option<PathBuf>,

    /// Master seed; fans out to init, dropout, shuffling and sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (overrides paths.out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Which embedding tables feed the model.
    #[arg(long, global = true, value_enum)]
    emb_mode: Option<EmbModeArg>,

    /// Architecture ablation.
    #[arg(long, global = true, value_enum)]
    ablation: Option<AblationArg>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbModeArg {
    Dual,
    GeneralOnly,
    DomainOnly,
}

impl From<EmbModeArg> for EmbMode {
    fn from(arg: EmbModeArg) -> Self {
        match arg {
            EmbModeArg::Dual => EmbMode::Dual,
            EmbModeArg::GeneralOnly => EmbMode::GeneralOnly,
            EmbModeArg::DomainOnly => EmbMode::DomainOnly,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AblationArg {
    None,
    Maxpool,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Auto,
    Plain,
    Jsonl,
}

#[derive(Subcommand)]
enum Command {
    /// Train domain embeddings from a raw one-sentence-per-line corpus.
    TrainEmbeddings {
        /// Corpus file (falls back to paths.embed_corpus).
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Output embedding file (default: <out_dir>/domain.vec).
        #[arg(long)]
        out_file: Option<PathBuf>,
        /// Embedding dimension override.
        #[arg(long)]
        dim: Option<usize>,
        /// Epoch count override.
        #[arg(long)]
        epochs: Option<usize>,
        /// Worker threads (>1 is fast but nondeterministic).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Train a tagger; writes model.bin and train_log.jsonl.
    Train,
    /// Evaluate a saved model, or run the multi-seed protocol with --runs.
    Eval {
        /// Saved model file.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Dataset to score (default: paths.test_data).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Train this many fresh models (seeds seed..seed+N) and average.
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Extract aspect spans from new text; prints jsonl records.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Input file: plain text lines or jsonl with a `text` field.
        #[arg(long)]
        input: PathBuf,
        /// Also write the jsonl records to this file.
        #[arg(long)]
        out_file: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "auto")]
        format: FormatArg,
    },
}

fn load_config(cli: &Cli, required: bool) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None if required => {
            return Err(Error::parameter(
                "config",
                "no config file: pass --config PATH or set $DECNN_CONFIG",
            ));
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.paths.out_dir = Some(out.clone());
    }
    if let Some(mode) = cli.emb_mode {
        cfg.model.emb_mode = mode.into();
    }
    if let Some(ablation) = cli.ablation {
        cfg.model.maxpool_ablation = matches!(ablation, AblationArg::Maxpool);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::TrainEmbeddings {
            corpus,
            out_file,
            dim,
            epochs,
            threads,
        } => {
            let mut cfg = load_config(&cli, corpus.is_none())?;
            if let Some(d) = dim {
                cfg.embed.dim = *d;
            }
            if let Some(e) = epochs {
                cfg.embed.epochs = *e;
            }
            if let Some(t) = threads {
                cfg.embed.threads = *t;
            }
            commands::cmd_train_embeddings(&cfg, corpus.clone(), out_file.clone())
        }
        Command::Train => {
            let cfg = load_config(&cli, true)?;
            commands::cmd_train(&cfg)
        }
        Command::Eval { model, data, runs } => {
            // With an explicit --model and --data, no config is needed.
            let required = runs.is_some() || data.is_none() || model.is_none();
            let cfg = load_config(&cli, required)?;
            commands::cmd_eval(&cfg, model.clone(), data.clone(), *runs)
        }
        Command::Predict {
            model,
            input,
            out_file,
            format,
        } => {
            let format = match format {
                FormatArg::Auto => PredictFormat::Auto,
                FormatArg::Plain => PredictFormat::Plain,
                FormatArg::Jsonl => PredictFormat::Jsonl,
            };
            commands::cmd_predict(model, input, out_file.clone(), format)
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            std::process::exit(if e.is_usage() { 2 } else { 1 });
        }
    }
}
