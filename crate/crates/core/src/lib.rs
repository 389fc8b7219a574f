//! Social-media analytics engine.
//!
//! Ingests microblogs and reviews, normalizes informal text, extracts aspect
//! terms with their sentiment, detects multi-label emotions, tracks how
//! discussion topics evolve across time windows and aggregates the results
//! into per-entity insight reports.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the pipeline and the gradient checks
//! use.

pub mod aspect;
pub mod corpus;
pub mod datasets;
pub mod embeddings;
pub mod emotion;
pub mod insights;
pub mod metrics;
pub mod neural;
pub mod pathways;
pub mod pipeline;
pub mod scalar;
pub mod sentiment;
pub mod textprep;

pub use scalar::Scalar;

pub type Graph = pathways::PathwayGraph<f64>;
pub type Vectors = embeddings::EmbeddingTable<f64>;
pub type DocVector = embeddings::DocVector<f64>;
pub type AspectTagger = aspect::TaggerNet<f64>;
pub type SentimentModel = sentiment::SentimentNet<f64>;
pub type EmotionModel = emotion::EmotionNet<f64>;
