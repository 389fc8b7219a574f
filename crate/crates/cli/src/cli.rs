use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand};
use pathwise_core::corpus::SourceKind;
use pathwise_core::emotion::DEFAULT_THRESHOLD;
use pathwise_core::pipeline::{parse_window_hours, DATA_DIR_ENV};

use crate::commands::{self, ExportFormat, ModelKind, TrainOpts};
use crate::server;

#[derive(Debug, Parser)]
#[command(name = "pathwise", version, about = "Social-media analytics: aspects, sentiment, emotions and discussion pathways")]
pub struct Cli {
    /// Where the corpus, models and runs live.
    #[arg(long, global = true, env = DATA_DIR_ENV, default_value = "pathwise-data")]
    pub data_dir: PathBuf,
    /// Pipeline configuration (TOML); defaults to `<data-dir>/pathwise.toml`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EvalKind {
    Aspect,
    Emotion,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Add exported posts to the corpus.
    Ingest {
        #[arg(long, value_parser = parse_source)]
        source: SourceKind,
        #[arg(long)]
        entity: String,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Train a model on gold data and write its checkpoint.
    Train {
        #[arg(value_enum)]
        model: ModelKind,
        #[arg(long)]
        data: PathBuf,
        /// Defaults to `<data-dir>/models/<model>.json`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        opts: TrainOpts,
    },
    /// Print precision, recall and F1 of a checkpoint on gold data.
    Eval {
        #[arg(value_enum)]
        model: EvalKind,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        /// Aspect: count overlapping spans as matches.
        #[arg(long)]
        partial: bool,
        /// Emotion: macro instead of micro averaging.
        #[arg(long = "macro")]
        macro_avg: bool,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Run the full pipeline for one entity and store the results.
    Analyze {
        #[arg(long)]
        entity: String,
        /// Time-window length, e.g. `24h`, `90m`, `2d`.
        #[arg(long)]
        window: Option<String>,
        /// Only posts at or after this RFC 3339 time.
        #[arg(long, requires = "until")]
        since: Option<DateTime<Utc>>,
        /// Only posts before this RFC 3339 time.
        #[arg(long, requires = "since")]
        until: Option<DateTime<Utc>>,
    },
    /// Print the pathway graph of a stored run.
    Export {
        #[arg(long)]
        entity: String,
        #[arg(long, value_enum, default_value = "json")]
        format: ExportFormat,
        #[arg(long, default_value = "latest")]
        run: String,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the JSON API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Static dashboard build served under /ui; defaults to
        /// `<data-dir>/ui` when that exists.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
}

fn parse_source(s: &str) -> Result<SourceKind, String> {
    s.parse().map_err(|e: pathwise_core::corpus::CorpusError| e.to_string())
}

fn default_model_path(data_dir: &Path, kind: ModelKind) -> PathBuf {
    data_dir.join(kind.default_file())
}

pub fn run(cli: Cli) -> Result<()> {
    let data_dir = cli.data_dir;
    match cli.command {
        Command::Ingest { source, entity, files } => {
            let stats = commands::ingest(&data_dir, source, &entity, &files)?;
            commands::print_json(&stats)
        }
        Command::Train { model, data, out, opts } => {
            let out = out.unwrap_or_else(|| default_model_path(&data_dir, model));
            let summary = commands::train(model, &data, &out, &opts)?;
            commands::print_json(&summary)
        }
        Command::Eval { model, data, ckpt, partial, macro_avg, threshold } => {
            let summary = match model {
                EvalKind::Aspect => commands::eval_aspect(&data, &ckpt, partial)?,
                EvalKind::Emotion => commands::eval_emotion(&data, &ckpt, macro_avg, threshold)?,
            };
            commands::print_raw(&format!(
                "precision {:.4}  recall {:.4}  f1 {:.4}  ({} examples)\n",
                summary.prf.precision, summary.prf.recall, summary.prf.f1, summary.examples
            ))
        }
        Command::Analyze { entity, window, since, until } => {
            let mut cfg = commands::load_config(&data_dir, cli.config.as_deref())?;
            if let Some(w) = window {
                cfg.pathways.window_hours = parse_window_hours(&w)?;
            }
            let range = since.zip(until);
            let run = commands::analyze(&data_dir, &entity, range, &cfg, None)?;
            commands::print_json(&commands::run_summary(&run))
        }
        Command::Export { entity, format, run, out } => {
            let body = commands::export(&data_dir, &entity, &run, format)?;
            match out {
                Some(p) => std::fs::write(&p, body).with_context(|| format!("writing {}", p.display())),
                None => commands::print_raw(&body),
            }
        }
        Command::Serve { addr, ui } => {
            let cfg = commands::load_config(&data_dir, cli.config.as_deref())?;
            let ui = ui.or_else(|| Some(data_dir.join("ui")).filter(|p| p.is_dir()));
            let state = server::AppState::new(&data_dir, cfg);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(server::serve(&addr, state, ui.as_deref()))
        }
    }
}
