//! Subcommand implementations. [`analyze`] is also what the HTTP service
//! calls, so both paths produce the same artifacts.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use pathwise_core::aspect::{evaluate_spans, train_tagger, SpanMatch, Tag, TaggerConfig, TaggerNet};
use pathwise_core::corpus::{read_records, CorpusStore, IngestStats, SourceKind};
use pathwise_core::datasets::{
    aspect_docs, aspect_examples, emotion_examples, load_aspect_gold, load_emotion_gold, load_sentiment_gold,
    sentiment_examples,
};
use pathwise_core::emotion::{evaluate_multilabel, labels_above, train_emotion, Averaging, Emotion, EmotionConfig, EmotionNet};
use pathwise_core::metrics::Prf;
use pathwise_core::neural::{Checkpoint, Optimizer, TrainConfig};
use pathwise_core::pipeline::{
    corpus_dir, run_pipeline, runs_dir, Models, PipelineConfig, PipelineRun, RunStore, GRAPH_FILE,
};
use pathwise_core::sentiment::{train_sentiment, SentimentConfig};
use pathwise_core::textprep::{NormalizePolicy, Preprocessor};
use pathwise_core::Vectors;
use serde::Serialize;
use serde_json::json;

pub fn ingest(data_dir: &Path, source: SourceKind, entity: &str, files: &[PathBuf]) -> Result<IngestStats> {
    let store = CorpusStore::open(&corpus_dir(data_dir))?;
    let mut total = IngestStats::default();
    for f in files {
        let records = read_records(f, source).with_context(|| format!("reading {}", f.display()))?;
        let st = store.ingest_batch(records, source, Some(entity))?;
        total.read += st.read;
        total.accepted += st.accepted;
        total.duplicates += st.duplicates;
        total.rejected += st.rejected;
        for (k, v) in st.rejected_by {
            *total.rejected_by.entry(k).or_default() += v;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Aspect,
    Sentiment,
    Emotion,
}

impl ModelKind {
    pub fn default_file(self) -> &'static str {
        match self {
            ModelKind::Aspect => "models/aspect.json",
            ModelKind::Sentiment => "models/sentiment.json",
            ModelKind::Emotion => "models/emotion.json",
        }
    }
}

#[derive(Debug, Clone, clap::Args)]
pub struct TrainOpts {
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long = "lr", default_value_t = 0.01)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// `adam` or `sgd`.
    #[arg(long, default_value = "adam")]
    pub optimizer: String,
    /// Global gradient-norm clip; 0 disables.
    #[arg(long, default_value_t = 5.0)]
    pub clip: f64,
    #[arg(long, default_value_t = 50)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 64)]
    pub attention_dim: usize,
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
    /// Pretrained word vectors (`word v1 .. vd` per line). Sets the
    /// embedding size.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub freeze_embeddings: bool,
    /// Sentiment only: train a positive/negative classifier.
    #[arg(long)]
    pub no_neutral: bool,
    /// Aspect only: loss weights for O, A and A_, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub class_weights: Option<Vec<f64>>,
}

impl TrainOpts {
    pub fn train_config(&self) -> Result<TrainConfig> {
        let optimizer = match self.optimizer.as_str() {
            "adam" => Optimizer::adam(),
            "sgd" => Optimizer::Sgd,
            other => bail!("unknown optimizer {other:?}"),
        };
        let cfg = TrainConfig {
            seed: self.seed,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer,
            clip: (self.clip > 0.0).then_some(self.clip),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Serialize)]
pub struct TrainSummary {
    pub model: ModelKind,
    pub examples: usize,
    pub dropped_spans: usize,
    pub epochs: usize,
    pub final_loss: Option<f64>,
    pub checkpoint: PathBuf,
    pub checkpoint_id: String,
}

pub fn train(kind: ModelKind, data: &Path, out: &Path, opts: &TrainOpts) -> Result<TrainSummary> {
    let tc = opts.train_config()?;
    let pre = Preprocessor::english(NormalizePolicy::default());
    let vectors: Option<Vectors> = match &opts.embeddings {
        Some(p) => {
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Some(Vectors::load_vectors(BufReader::new(f))?)
        }
        None => None,
    };
    let embed_dim = vectors.as_ref().map_or(opts.embed_dim, |v| v.dim());
    let (ck, examples, dropped, curve) = match kind {
        ModelKind::Aspect => {
            let (ex, dropped) = aspect_examples(&load_aspect_gold(data)?, &pre);
            let class_weights = opts.class_weights.as_ref().map(|w| [w[0], w[1], w[2]]);
            let cfg = TaggerConfig {
                embed_dim,
                hidden: opts.hidden,
                min_count: opts.min_count,
                freeze_embeddings: opts.freeze_embeddings,
                class_weights,
            };
            let (net, curve) = train_tagger(&ex, cfg, &tc, vectors.as_ref())?;
            (net.to_checkpoint(), ex.len(), dropped, curve)
        }
        ModelKind::Sentiment => {
            let (ex, dropped) = sentiment_examples(&load_sentiment_gold(data)?, &pre);
            let cfg = SentimentConfig {
                embed_dim,
                hidden: opts.hidden,
                attention_dim: opts.attention_dim,
                min_count: opts.min_count,
                freeze_embeddings: opts.freeze_embeddings,
                neutral: !opts.no_neutral,
            };
            let (net, curve) = train_sentiment(&ex, cfg, &tc, vectors.as_ref())?;
            (net.to_checkpoint(), ex.len(), dropped, curve)
        }
        ModelKind::Emotion => {
            let ex = emotion_examples(&load_emotion_gold(data)?, &pre);
            let cfg = EmotionConfig {
                embed_dim,
                hidden: opts.hidden,
                attention_dim: opts.attention_dim,
                min_count: opts.min_count,
                freeze_embeddings: opts.freeze_embeddings,
            };
            let (net, curve) = train_emotion(&ex, cfg, &tc, vectors.as_ref())?;
            (net.to_checkpoint(), ex.len(), 0, curve)
        }
    };
    ck.save(out).with_context(|| format!("writing {}", out.display()))?;
    Ok(TrainSummary {
        model: kind,
        examples,
        dropped_spans: dropped,
        epochs: curve.len(),
        final_loss: curve.last().copied(),
        checkpoint: out.to_path_buf(),
        checkpoint_id: ck.id(),
    })
}

#[derive(Debug, Serialize)]
pub struct EvalSummary {
    pub examples: usize,
    pub dropped_spans: usize,
    #[serde(flatten)]
    pub prf: Prf,
}

/// Span-level P/R/F of an aspect checkpoint on gold data.
pub fn eval_aspect(data: &Path, ckpt: &Path, partial: bool) -> Result<EvalSummary> {
    let net: TaggerNet<f64> = TaggerNet::from_checkpoint(&Checkpoint::load(ckpt)?)?;
    let pre = Preprocessor::english(NormalizePolicy::default());
    let (docs, dropped) = aspect_docs(&load_aspect_gold(data)?, &pre);
    let pred: Vec<_> = docs.iter().map(|d| net.extract(&d.doc).iter().map(|s| s.range()).collect()).collect();
    let gold: Vec<_> = docs.iter().map(|d| d.spans.clone()).collect();
    let mode = if partial { SpanMatch::Partial } else { SpanMatch::Exact };
    Ok(EvalSummary { examples: docs.len(), dropped_spans: dropped, prf: evaluate_spans(&pred, &gold, mode) })
}

/// Token-level accuracy of a tagger on aligned gold data.
pub fn aspect_token_accuracy(net: &TaggerNet<f64>, data: &[(Vec<String>, Vec<Tag>)]) -> f64 {
    let (mut hit, mut n) = (0usize, 0usize);
    for (words, gold) in data {
        let pred = net.tag_words(words);
        hit += pred.iter().zip(gold).filter(|(p, g)| p == g).count();
        n += gold.len();
    }
    if n == 0 {
        1.0
    } else {
        hit as f64 / n as f64
    }
}

pub fn eval_emotion(data: &Path, ckpt: &Path, macro_avg: bool, threshold: f64) -> Result<EvalSummary> {
    let net: EmotionNet<f64> = EmotionNet::from_checkpoint(&Checkpoint::load(ckpt)?)?;
    let pre = Preprocessor::english(NormalizePolicy::default());
    let ex = emotion_examples(&load_emotion_gold(data)?, &pre);
    let mut preds = Vec::with_capacity(ex.len());
    let mut golds = Vec::with_capacity(ex.len());
    for (words, labels) in &ex {
        let p = net.probabilities(words)?;
        let probs = Emotion::ALL.into_iter().zip(p).collect();
        preds.push(labels_above(&probs, threshold));
        golds.push(Emotion::ALL.into_iter().filter(|e| labels[e.index()]).collect());
    }
    let avg = if macro_avg { Averaging::Macro } else { Averaging::Micro };
    Ok(EvalSummary { examples: ex.len(), dropped_spans: 0, prf: evaluate_multilabel(&preds, &golds, avg)? })
}

/// Config from `path`, else `<data_dir>/pathwise.toml`, else defaults.
pub fn load_config(data_dir: &Path, path: Option<&Path>) -> Result<PipelineConfig> {
    Ok(match path {
        Some(p) => {
            let s = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            PipelineConfig::from_toml(&s)?
        }
        None => PipelineConfig::load_or_default(data_dir)?,
    })
}

/// Runs the pipeline for `entity` and persists the artifacts. `run_id`
/// replaces the generated id when given.
pub fn analyze(
    data_dir: &Path,
    entity: &str,
    window: Option<(DateTime<Utc>, DateTime<Utc>)>,
    cfg: &PipelineConfig,
    run_id: Option<String>,
) -> Result<PipelineRun> {
    let store = CorpusStore::open(&corpus_dir(data_dir))?;
    let models = Models::load(cfg, data_dir)?;
    let mut out = run_pipeline(&store, &models, entity, window, cfg)?;
    if let Some(id) = run_id {
        out.run.run_id = id;
    }
    RunStore::new(runs_dir(data_dir)).persist(&mut out)?;
    Ok(out.run)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ExportFormat {
    Json,
    Dot,
}

pub fn export(data_dir: &Path, entity: &str, run: &str, format: ExportFormat) -> Result<String> {
    let rs = RunStore::new(runs_dir(data_dir));
    let r = rs.resolve(entity, run)?;
    Ok(match format {
        ExportFormat::Json => rs.read_artifact(&r, GRAPH_FILE)?,
        ExportFormat::Dot => rs.graph(&r)?.to_dot(),
    })
}

pub fn print_json<S: Serialize>(v: &S) -> Result<()> {
    let mut body = serde_json::to_string_pretty(v)?;
    body.push('\n');
    print_raw(&body)
}

/// Writes to stdout; a closed pipe is not an error.
pub fn print_raw(body: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(body.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

pub fn run_summary(run: &PipelineRun) -> serde_json::Value {
    json!({
        "run_id": run.run_id,
        "entity_id": run.entity_id,
        "counts": run.counts,
        "timings_ms": run.timings_ms,
        "models": run.models,
    })
}
