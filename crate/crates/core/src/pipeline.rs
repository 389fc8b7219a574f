//! End-to-end orchestration: one entity's posts in, a pathway graph and an
//! insight report out, persisted as an immutable run.
//!
//! ```text
//! <data_dir>/corpus/posts.jsonl
//! <data_dir>/models/{aspect,sentiment,emotion}.json
//! <data_dir>/runs/<entity>/<run_id>/{run,graph,report,analyses}.json
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aspect::TaggerNet;
use crate::corpus::{CorpusStore, Post};
use crate::embeddings::{EmbeddingTable, Idf};
use crate::emotion::{EmotionNet, EmotionVector, DEFAULT_THRESHOLD};
use crate::insights::{build_report, InsightConfig, InsightReport, PostAnalysis};
use crate::neural::{Checkpoint, NeuralError};
use crate::pathways::{build_graph, label_and_annotate, PathwayConfig, PathwayError, PathwayGraph, PostPoint, Window};
use crate::sentiment::SentimentNet;
use crate::textprep::{english_stoplist, remove_stopwords, NormalizePolicy, Preprocessor};

pub const DATA_DIR_ENV: &str = "PATHWISE_DATA_DIR";
pub const CONFIG_FILE: &str = "pathwise.toml";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("no posts for entity {0:?}")]
    NoPosts(String),
    #[error("missing {0} checkpoint")]
    MissingCheckpoint(String),
    #[error("{model} checkpoint: {source}")]
    Checkpoint { model: String, source: NeuralError },
    #[error("embeddings: {0}")]
    Embeddings(String),
    #[error("model failure: {0}")]
    Model(String),
    #[error(transparent)]
    Pathway(#[from] PathwayError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown run {0:?}")]
    UnknownRun(String),
    #[error("i/o error: {0}")]
    Io(String),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io(format!("{}: {e}", path.display()))
}

/// Everything that influences a run's output besides the data and models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    #[serde(flatten)]
    pub pathways: PathwayConfig,
    pub emotion_threshold: f64,
    /// Number of emotions listed in the report.
    pub top_k: usize,
    pub include_neutral_only: bool,
    pub emoji_words: bool,
    pub segment_hashtags: bool,
    pub spell_correct: bool,
    /// Checkpoint paths; relative paths resolve against the data directory.
    pub aspect_model: PathBuf,
    pub sentiment_model: PathBuf,
    pub emotion_model: PathBuf,
    /// Word vectors for clustering. Without them the emotion model's input
    /// embeddings are used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let policy = NormalizePolicy::default();
        Self {
            pathways: PathwayConfig::default(),
            emotion_threshold: DEFAULT_THRESHOLD,
            top_k: InsightConfig::default().top_k,
            include_neutral_only: InsightConfig::default().include_neutral_only,
            emoji_words: policy.emoji_words,
            segment_hashtags: policy.segment_hashtags,
            spell_correct: policy.spell_correct,
            aspect_model: PathBuf::from("models/aspect.json"),
            sentiment_model: PathBuf::from("models/sentiment.json"),
            emotion_model: PathBuf::from("models/emotion.json"),
            embeddings: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(s: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(s).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// `<data_dir>/pathwise.toml` if present, defaults otherwise.
    pub fn load_or_default(data_dir: &Path) -> Result<Self, PipelineError> {
        let path = data_dir.join(CONFIG_FILE);
        match fs::read_to_string(&path) {
            Ok(s) => Self::from_toml(&s),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(io_err(&path, e)),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.pathways.validate()?;
        if !(0.0..1.0).contains(&self.emotion_threshold) {
            return Err(PipelineError::Config("emotion_threshold must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn policy(&self) -> NormalizePolicy {
        NormalizePolicy {
            emoji_words: self.emoji_words,
            segment_hashtags: self.segment_hashtags,
            spell_correct: self.spell_correct,
        }
    }

    fn insight(&self) -> InsightConfig {
        InsightConfig { top_k: self.top_k, include_neutral_only: self.include_neutral_only }
    }
}

/// Parses a window length such as `24h`, `90m`, `2d` or `3600s` into hours.
/// A bare number means hours.
pub fn parse_window_hours(s: &str) -> Result<f64, PipelineError> {
    let s = s.trim();
    let (num, unit) = match s.find(|c: char| c.is_ascii_alphabetic()) {
        Some(i) => (&s[..i], &s[i..]),
        None => (s, "h"),
    };
    let v: f64 = num.trim().parse().map_err(|_| PipelineError::Config(format!("bad window {s:?}")))?;
    let hours = match unit {
        "s" => v / 3600.0,
        "m" => v / 60.0,
        "h" => v,
        "d" => v * 24.0,
        _ => return Err(PipelineError::Config(format!("bad window unit {unit:?}"))),
    };
    if !(hours > 0.0 && hours.is_finite()) {
        return Err(PipelineError::Config(format!("window must be positive, got {s:?}")));
    }
    Ok(hours)
}

pub fn corpus_dir(data_dir: &Path) -> PathBuf {
    data_dir.join("corpus")
}

pub fn runs_dir(data_dir: &Path) -> PathBuf {
    data_dir.join("runs")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelIds {
    pub aspect: String,
    pub sentiment: String,
    pub emotion: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<String>,
}

/// The three trained models plus the vectors used for clustering.
#[derive(Debug, Clone)]
pub struct Models {
    pub aspect: TaggerNet<f64>,
    pub sentiment: SentimentNet<f64>,
    pub emotion: EmotionNet<f64>,
    pub vectors: EmbeddingTable<f64>,
    pub ids: ModelIds,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_checkpoint(base: &Path, p: &Path, model: &str) -> Result<Checkpoint, PipelineError> {
    let path = resolve(base, p);
    if !path.is_file() {
        return Err(PipelineError::MissingCheckpoint(model.to_string()));
    }
    Checkpoint::load(&path).map_err(|source| PipelineError::Checkpoint { model: model.to_string(), source })
}

fn ck_err(model: &str) -> impl Fn(NeuralError) -> PipelineError + '_ {
    move |source| PipelineError::Checkpoint { model: model.to_string(), source }
}

impl Models {
    pub fn load(cfg: &PipelineConfig, data_dir: &Path) -> Result<Self, PipelineError> {
        let a = load_checkpoint(data_dir, &cfg.aspect_model, "aspect")?;
        let s = load_checkpoint(data_dir, &cfg.sentiment_model, "sentiment")?;
        let e = load_checkpoint(data_dir, &cfg.emotion_model, "emotion")?;
        let aspect = TaggerNet::from_checkpoint(&a).map_err(ck_err("aspect"))?;
        let sentiment = SentimentNet::from_checkpoint(&s).map_err(ck_err("sentiment"))?;
        let emotion = EmotionNet::from_checkpoint(&e).map_err(ck_err("emotion"))?;
        let (vectors, vec_id) = match &cfg.embeddings {
            Some(p) => {
                let path = resolve(data_dir, p);
                let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
                let table = EmbeddingTable::load_vectors(BufReader::new(bytes.as_slice()))
                    .map_err(|e| PipelineError::Embeddings(e.to_string()))?;
                (table, Some(sha256_hex(&bytes)))
            }
            None => (input_embeddings(&emotion)?, None),
        };
        let ids = ModelIds { aspect: a.id(), sentiment: s.id(), emotion: e.id(), embeddings: vec_id };
        Ok(Self { aspect, sentiment, emotion, vectors, ids })
    }
}

/// The emotion model's learned input embeddings as a lookup table.
pub fn input_embeddings(net: &EmotionNet<f64>) -> Result<EmbeddingTable<f64>, PipelineError> {
    let table = &net.encoder.embedding.table;
    let entries = net.vocab.words().iter().enumerate().skip(1).map(|(i, w)| (w.clone(), table.row(i).to_vec()));
    EmbeddingTable::from_entries(entries).map_err(|e| PipelineError::Embeddings(e.to_string()))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Immutable record of one pipeline execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub run_id: String,
    pub entity_id: String,
    pub created_at: DateTime<Utc>,
    pub config: PipelineConfig,
    pub models: ModelIds,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
    pub timings_ms: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub run: PipelineRun,
    pub graph: PathwayGraph<f64>,
    pub report: InsightReport,
    pub analyses: Vec<PostAnalysis>,
}

struct Stopwatch {
    at: Instant,
    timings: BTreeMap<String, f64>,
}

impl Stopwatch {
    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings.insert(stage.to_string(), (now - self.at).as_secs_f64() * 1e3);
        self.at = now;
    }
}

/// Analyses every post of `entity` (optionally restricted to `[start, end)`)
/// and builds the graph and report. Nothing is written.
pub fn run_pipeline(
    store: &CorpusStore,
    models: &Models,
    entity: &str,
    window: Option<(DateTime<Utc>, DateTime<Utc>)>,
    cfg: &PipelineConfig,
) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    let mut sw = Stopwatch { at: Instant::now(), timings: BTreeMap::new() };
    let mut counts = BTreeMap::new();

    let posts = store.query_posts(entity, window);
    if posts.is_empty() {
        return Err(PipelineError::NoPosts(entity.to_string()));
    }
    counts.insert("posts".to_string(), posts.len());
    sw.lap("query");

    let pre = Preprocessor::english(cfg.policy());
    let docs: Vec<_> = posts.iter().map(|p| pre.process(&p.id, &p.raw_text)).collect();
    counts.insert("tokens".to_string(), docs.iter().map(|d| d.len()).sum());
    sw.lap("textprep");

    let mut analyses = Vec::with_capacity(posts.len());
    let (mut n_aspects, mut n_emotions) = (0, 0);
    for doc in &docs {
        let spans = models.aspect.extract(doc);
        let aspects = models.sentiment.classify_all(doc, &spans).map_err(|e| PipelineError::Model(e.to_string()))?;
        let emotions = if doc.is_empty() {
            EmotionVector::from_probs([0.0; 11], cfg.emotion_threshold)
        } else {
            models.emotion.detect_emotions(doc, cfg.emotion_threshold).map_err(|e| PipelineError::Model(e.to_string()))?
        };
        n_aspects += aspects.len();
        n_emotions += emotions.labels.len();
        analyses.push(PostAnalysis::new(doc.post_id.clone(), aspects, emotions));
    }
    counts.insert("aspects".to_string(), n_aspects);
    counts.insert("emotion_labels".to_string(), n_emotions);
    sw.lap("models");

    let stop = english_stoplist();
    let topic_tokens: Vec<Vec<String>> =
        docs.iter().map(|d| remove_stopwords(d, &stop).words().map(String::from).collect()).collect();
    let idf: Idf<f64> = Idf::fit(&topic_tokens);
    let points: Vec<PostPoint<f64>> = posts
        .iter()
        .zip(&topic_tokens)
        .map(|(p, toks)| PostPoint {
            post_id: p.id.clone(),
            timestamp: p.timestamp,
            vector: models.vectors.doc_vector(toks.iter().map(String::as_str), &idf),
        })
        .collect();
    let mut graph = build_graph(&points, &cfg.pathways)?;
    let token_map: HashMap<String, Vec<String>> =
        posts.iter().map(|p| p.id.clone()).zip(topic_tokens.iter().cloned()).collect();
    let analysis_map: HashMap<String, PostAnalysis> =
        analyses.iter().map(|a| (a.post_id.clone(), a.clone())).collect();
    label_and_annotate(&mut graph, &token_map, &analysis_map, cfg.pathways.top_terms)?;
    counts.insert("layers".to_string(), graph.layers.len());
    counts.insert("clusters".to_string(), graph.clusters().count());
    counts.insert("edges".to_string(), graph.edges.len());
    sw.lap("pathways");

    let report = build_report(entity, &analyses, &cfg.insight());
    counts.insert("report_aspects".to_string(), report.aspects.len());
    sw.lap("insights");

    let created_at = Utc::now();
    let snapshot = serde_json::to_string(&(entity, cfg, &models.ids, window)).expect("snapshot serializes");
    let run_id = run_id_for(created_at, &snapshot);
    let run = PipelineRun {
        run_id,
        entity_id: entity.to_string(),
        created_at,
        config: cfg.clone(),
        models: models.ids.clone(),
        window: window.map(|(start, end)| Window { start, end }),
        timings_ms: sw.timings,
        counts,
    };
    Ok(RunOutput { run, graph, report, analyses })
}

/// Sortable id: creation time plus a short hash of `salt`.
pub fn run_id_for(at: DateTime<Utc>, salt: &str) -> String {
    format!("{}-{}", at.format("%Y%m%dT%H%M%S%3fZ"), &sha256_hex(salt.as_bytes())[..8])
}

/// A post together with what the models made of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzedPost {
    pub post: Post,
    pub analysis: PostAnalysis,
}

pub const RUN_FILE: &str = "run.json";
pub const GRAPH_FILE: &str = "graph.json";
pub const REPORT_FILE: &str = "report.json";
pub const ANALYSES_FILE: &str = "analyses.json";

pub fn to_json_pretty<S: Serialize>(v: &S) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s
}

fn is_run_id(s: &str) -> bool {
    !s.is_empty() && !s.starts_with('.') && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

/// File-backed run artifacts. A run directory is assembled under a hidden
/// name and renamed into place, so readers see either all of it or none.
#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entity_dir(&self, entity: &str) -> PathBuf {
        let safe: String =
            entity.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect();
        self.root.join(safe.trim_start_matches('.'))
    }

    /// Writes all artifacts and returns the final run directory. The run id
    /// gets a numeric suffix if it is already taken.
    pub fn persist(&self, out: &mut RunOutput) -> Result<PathBuf, PipelineError> {
        let dir = self.entity_dir(&out.run.entity_id);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let base = out.run.run_id.clone();
        let mut n = 1;
        while dir.join(&out.run.run_id).exists() {
            n += 1;
            out.run.run_id = format!("{base}-{n}");
        }
        let tmp = dir.join(format!(".tmp-{}-{}", out.run.run_id, std::process::id()));
        fs::create_dir_all(&tmp).map_err(|e| io_err(&tmp, e))?;
        let files = [
            (RUN_FILE, to_json_pretty(&out.run)),
            (GRAPH_FILE, to_json_pretty(&out.graph)),
            (REPORT_FILE, to_json_pretty(&out.report)),
            (ANALYSES_FILE, to_json_pretty(&out.analyses)),
        ];
        for (name, body) in files {
            let p = tmp.join(name);
            fs::write(&p, body).map_err(|e| io_err(&p, e))?;
        }
        let fin = dir.join(&out.run.run_id);
        fs::rename(&tmp, &fin).map_err(|e| io_err(&fin, e))?;
        Ok(fin)
    }

    /// Completed runs of `entity`, oldest first.
    pub fn runs(&self, entity: &str) -> Result<Vec<PipelineRun>, PipelineError> {
        let dir = self.entity_dir(entity);
        let rd = match fs::read_dir(&dir) {
            Ok(rd) => rd,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&dir, e)),
        };
        let mut runs = Vec::new();
        for entry in rd {
            let entry = entry.map_err(|e| io_err(&dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if !is_run_id(&name) {
                continue;
            }
            let p = entry.path().join(RUN_FILE);
            if let Ok(s) = fs::read_to_string(&p) {
                runs.push(serde_json::from_str::<PipelineRun>(&s).map_err(|e| io_err(&p, e))?);
            }
        }
        runs.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.run_id.cmp(&b.run_id)));
        Ok(runs)
    }

    /// Entities with at least one completed run.
    pub fn entities(&self) -> Result<Vec<String>, PipelineError> {
        let rd = match fs::read_dir(&self.root) {
            Ok(rd) => rd,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&self.root, e)),
        };
        let mut out = Vec::new();
        for entry in rd.flatten() {
            if entry.path().is_dir() {
                let name = entry.file_name().to_string_lossy().into_owned();
                if !self.runs(&name)?.is_empty() {
                    out.push(name);
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// `"latest"` resolves to the most recently created run.
    pub fn resolve(&self, entity: &str, run: &str) -> Result<PipelineRun, PipelineError> {
        let runs = self.runs(entity)?;
        let found = if run == "latest" { runs.last().cloned() } else { runs.into_iter().find(|r| r.run_id == run) };
        found.ok_or_else(|| PipelineError::UnknownRun(format!("{entity}/{run}")))
    }

    /// Looks a run up by id across all entities.
    pub fn find(&self, run_id: &str) -> Result<PipelineRun, PipelineError> {
        for entity in self.entities()? {
            if let Some(r) = self.runs(&entity)?.into_iter().find(|r| r.run_id == run_id) {
                return Ok(r);
            }
        }
        Err(PipelineError::UnknownRun(run_id.to_string()))
    }

    pub fn artifact_path(&self, run: &PipelineRun, file: &str) -> PathBuf {
        self.entity_dir(&run.entity_id).join(&run.run_id).join(file)
    }

    pub fn read_artifact(&self, run: &PipelineRun, file: &str) -> Result<String, PipelineError> {
        let p = self.artifact_path(run, file);
        fs::read_to_string(&p).map_err(|e| io_err(&p, e))
    }

    pub fn graph(&self, run: &PipelineRun) -> Result<PathwayGraph<f64>, PipelineError> {
        let s = self.read_artifact(run, GRAPH_FILE)?;
        serde_json::from_str(&s).map_err(|e| io_err(&self.artifact_path(run, GRAPH_FILE), e))
    }

    pub fn report(&self, run: &PipelineRun) -> Result<InsightReport, PipelineError> {
        let s = self.read_artifact(run, REPORT_FILE)?;
        serde_json::from_str(&s).map_err(|e| io_err(&self.artifact_path(run, REPORT_FILE), e))
    }

    pub fn analyses(&self, run: &PipelineRun) -> Result<Vec<PostAnalysis>, PipelineError> {
        let s = self.read_artifact(run, ANALYSES_FILE)?;
        serde_json::from_str(&s).map_err(|e| io_err(&self.artifact_path(run, ANALYSES_FILE), e))
    }
}

/// Restricts a graph to layers whose window overlaps `[from, to)`, keeping
/// only edges between retained clusters.
pub fn filter_graph(
    graph: &PathwayGraph<f64>,
    from: Option<DateTime<Utc>>,
    to: Option<DateTime<Utc>>,
) -> PathwayGraph<f64> {
    let layers: Vec<_> = graph
        .layers
        .iter()
        .filter(|l| from.is_none_or(|f| l.window.end > f) && to.is_none_or(|t| l.window.start < t))
        .cloned()
        .collect();
    let kept: std::collections::HashSet<&str> =
        layers.iter().flat_map(|l| l.clusters.iter().map(|c| c.id.as_str())).collect();
    let edges =
        graph.edges.iter().filter(|e| kept.contains(e.from.as_str()) && kept.contains(e.to.as_str())).cloned().collect();
    PathwayGraph { layers, edges }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_lengths() {
        assert_eq!(parse_window_hours("24h").unwrap(), 24.0);
        assert_eq!(parse_window_hours("90m").unwrap(), 1.5);
        assert_eq!(parse_window_hours("2d").unwrap(), 48.0);
        assert_eq!(parse_window_hours("12").unwrap(), 12.0);
        assert!(parse_window_hours("0h").is_err());
        assert!(parse_window_hours("3w").is_err());
        assert!(parse_window_hours("h").is_err());
    }

    #[test]
    fn toml_round_trip_and_defaults() {
        let cfg = PipelineConfig::from_toml("tau = 0.6\nwindow_hours = 12\ntop_k = 5\n").unwrap();
        assert_eq!(cfg.pathways.tau, 0.6);
        assert_eq!(cfg.pathways.window_hours, 12.0);
        assert_eq!(cfg.pathways.tau_link, 0.5);
        assert_eq!(cfg.top_k, 5);
        assert_eq!(PipelineConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(PipelineConfig::from_toml("").unwrap(), PipelineConfig::default());
        assert!(PipelineConfig::from_toml("tau = 1.5").is_err());
        assert!(PipelineConfig::from_toml("emotion_threshold = 1.0").is_err());
    }

    #[test]
    fn missing_checkpoint_is_named() {
        let dir = tempfile::tempdir().unwrap();
        match Models::load(&PipelineConfig::default(), dir.path()) {
            Err(PipelineError::MissingCheckpoint(m)) => assert_eq!(m, "aspect"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_runs_and_hidden_dirs() {
        let dir = tempfile::tempdir().unwrap();
        let rs = RunStore::new(dir.path());
        assert!(rs.runs("e").unwrap().is_empty());
        assert!(matches!(rs.resolve("e", "latest"), Err(PipelineError::UnknownRun(_))));
        fs::create_dir_all(dir.path().join("e/.tmp-x")).unwrap();
        fs::write(dir.path().join("e/.tmp-x/run.json"), "{}").unwrap();
        assert!(rs.runs("e").unwrap().is_empty());
        assert!(rs.entities().unwrap().is_empty());
    }
}
