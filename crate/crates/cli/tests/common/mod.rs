#![allow(dead_code)]

use std::path::{Path, PathBuf};

use pathwise_cli::commands::{self, ModelKind, TrainOpts};
use pathwise_core::corpus::SourceKind;

pub const ENTITY: &str = "sigiriya";

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

pub fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas")
}

/// Small, fast training settings; enough to fit the fixture sets.
pub fn quick_opts(epochs: usize) -> TrainOpts {
    TrainOpts {
        epochs,
        learning_rate: 0.01,
        batch_size: 8,
        seed: 7,
        optimizer: "adam".into(),
        clip: 5.0,
        embed_dim: 16,
        hidden: 16,
        attention_dim: 16,
        min_count: 1,
        embeddings: None,
        freeze_embeddings: false,
        no_neutral: false,
        class_weights: None,
    }
}

/// A data directory holding the end-to-end posts and three trained models.
pub fn trained_data_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let fx = fixtures();
    commands::ingest(d, SourceKind::Twitter, ENTITY, &[fx.join("e2e_posts.jsonl")]).unwrap();
    let opts = quick_opts(60);
    for (kind, file) in [
        (ModelKind::Aspect, "aspect_train.jsonl"),
        (ModelKind::Sentiment, "sentiment_train.jsonl"),
        (ModelKind::Emotion, "emotion_train.tsv"),
    ] {
        commands::train(kind, &fx.join(file), &d.join(kind.default_file()), &opts).unwrap();
    }
    dir
}

pub struct Schemas {
    dir: PathBuf,
}

impl Schemas {
    pub fn new() -> Self {
        Self { dir: schema_dir() }
    }

    /// Validation errors of `value` against `<name>.schema.json`.
    pub fn errors(&self, name: &str, value: &serde_json::Value) -> Vec<String> {
        let path = self.dir.join(format!("{name}.schema.json"));
        let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let validator = jsonschema::validator_for(&schema).unwrap();
        validator.iter_errors(value).map(|e| format!("{} at {}", e, e.instance_path)).collect()
    }

    pub fn assert_valid(&self, name: &str, value: &serde_json::Value) {
        let errs = self.errors(name, value);
        assert!(errs.is_empty(), "{name} schema violations: {errs:#?}");
    }
}

/// Training settings used for the overfitting checks.
pub fn full_opts(epochs: usize) -> TrainOpts {
    TrainOpts { embed_dim: 50, hidden: 64, attention_dim: 64, ..quick_opts(epochs) }
}
