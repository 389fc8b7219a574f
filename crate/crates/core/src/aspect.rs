//! Aspect term extraction as O / A / A_ sequence labeling.
//!
//! `A` starts an aspect term, `A_` continues it and `O` marks every other
//! token. A bidirectional GRU encoder feeds a per-position softmax.

use std::collections::BTreeSet;
use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingTable;
use crate::metrics::Prf;
use crate::neural::{
    self, argmax, softmax, Checkpoint, Dense, Encoder, Network, NeuralError, Tensor, TrainConfig, Vocab,
    EMBEDDING_PARAM,
};
use crate::scalar::Scalar;
use crate::textprep::{NormalizedDoc, Provenance};

pub const MODEL_KIND: &str = "aspect_tagger";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tag {
    O,
    A,
    #[serde(rename = "A_")]
    AI,
}

impl Tag {
    /// Also the tie-break order of the classifier.
    pub const ALL: [Tag; 3] = [Tag::O, Tag::A, Tag::AI];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::O => "O",
            Tag::A => "A",
            Tag::AI => "A_",
        }
    }

    pub fn parse(s: &str) -> Option<Tag> {
        Tag::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

/// A run of tokens `[start, end)` of a normalized document.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AspectSpan {
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

impl AspectSpan {
    pub fn from_range(doc: &NormalizedDoc, r: Range<usize>) -> Self {
        let surface = doc.tokens[r.clone()].iter().map(|t| t.normal.as_str()).collect::<Vec<_>>().join(" ");
        Self { start: r.start, end: r.end, surface }
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AspectError {
    #[error("empty document")]
    EmptyDoc,
    #[error("{tags} tags for {tokens} tokens")]
    LengthMismatch { tags: usize, tokens: usize },
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

/// Maximal `A (A_)*` runs. An `A_` that does not continue a span starts one.
pub fn decode_ranges(tags: &[Tag]) -> Vec<Range<usize>> {
    let mut out: Vec<Range<usize>> = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &t) in tags.iter().enumerate() {
        match t {
            Tag::O => {
                if let Some(s) = open.take() {
                    out.push(s..i);
                }
            }
            Tag::A => {
                if let Some(s) = open.replace(i) {
                    out.push(s..i);
                }
            }
            Tag::AI => {
                if open.is_none() {
                    open = Some(i);
                }
            }
        }
    }
    if let Some(s) = open {
        out.push(s..tags.len());
    }
    out
}

pub fn decode_spans(tags: &[Tag], doc: &NormalizedDoc) -> Result<Vec<AspectSpan>, AspectError> {
    if tags.len() != doc.len() {
        return Err(AspectError::LengthMismatch { tags: tags.len(), tokens: doc.len() });
    }
    Ok(decode_ranges(tags).into_iter().map(|r| AspectSpan::from_range(doc, r)).collect())
}

/// Gold tags for disjoint ordered spans.
pub fn encode_spans(spans: &[Range<usize>], len: usize) -> Vec<Tag> {
    let mut tags = vec![Tag::O; len];
    for r in spans {
        for (k, i) in r.clone().enumerate() {
            tags[i] = if k == 0 { Tag::A } else { Tag::AI };
        }
    }
    tags
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanMatch {
    #[default]
    Exact,
    /// A predicted span counts when it overlaps some gold span, and a gold
    /// span is recalled when some prediction overlaps it.
    Partial,
}

/// Span-level precision, recall and F1 over parallel per-sentence span sets.
///
/// # Panics
/// If `pred` and `gold` differ in length.
pub fn evaluate_spans(pred: &[Vec<Range<usize>>], gold: &[Vec<Range<usize>>], mode: SpanMatch) -> Prf {
    assert_eq!(pred.len(), gold.len(), "parallel sentence lists");
    let key = |r: &Range<usize>| (r.start, r.end);
    let (mut tp_p, mut tp_g, mut np, mut ng) = (0, 0, 0, 0);
    for (p, g) in pred.iter().zip(gold) {
        let p: BTreeSet<(usize, usize)> = p.iter().map(key).collect();
        let g: BTreeSet<(usize, usize)> = g.iter().map(key).collect();
        np += p.len();
        ng += g.len();
        match mode {
            SpanMatch::Exact => {
                let hit = p.intersection(&g).count();
                tp_p += hit;
                tp_g += hit;
            }
            SpanMatch::Partial => {
                let overlaps = |a: &(usize, usize), b: &(usize, usize)| a.0 < b.1 && b.0 < a.1;
                tp_p += p.iter().filter(|a| g.iter().any(|b| overlaps(a, b))).count();
                tp_g += g.iter().filter(|b| p.iter().any(|a| overlaps(a, b))).count();
            }
        }
    }
    let precision = if np == 0 { 1.0 } else { tp_p as f64 / np as f64 };
    let recall = if ng == 0 { 1.0 } else { tp_g as f64 / ng as f64 };
    Prf::from_pr(precision, recall)
}

fn is_terminator(s: &str) -> bool {
    matches!(s, "." | "!" | "?")
}

/// Sentence ranges over the normalized tokens: a sentence ends after a run
/// of `.`, `!`, `?` or after an emoji.
pub fn split_sentences(doc: &NormalizedDoc) -> Vec<Range<usize>> {
    let toks = &doc.tokens;
    let mut out = Vec::new();
    let mut start = 0;
    for i in 0..toks.len() {
        let next = toks.get(i + 1);
        let ends = if is_terminator(&toks[i].normal) && toks[i].provenance == Provenance::Verbatim {
            !next.is_some_and(|n| is_terminator(&n.normal) && n.provenance == Provenance::Verbatim)
        } else if toks[i].provenance == Provenance::EmojiWorded {
            !next.is_some_and(|n| n.provenance == Provenance::EmojiWorded)
        } else {
            false
        };
        if ends {
            out.push(start..i + 1);
            start = i + 1;
        }
    }
    if start < toks.len() {
        out.push(start..toks.len());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaggerConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    /// Words rarer than this in training map to `<unk>`.
    pub min_count: usize,
    pub freeze_embeddings: bool,
    /// Per-tag loss weights in `O, A, A_` order.
    pub class_weights: Option<[f64; 3]>,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        Self { embed_dim: 50, hidden: 64, min_count: 1, freeze_embeddings: false, class_weights: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggedExample {
    pub ids: Vec<usize>,
    pub tags: Vec<Tag>,
}

/// Embedding → BiGRU → Dense(3) per position.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggerNet<T> {
    pub config: TaggerConfig,
    pub vocab: Vocab,
    pub encoder: Encoder<T>,
    pub out: Dense<T>,
}

impl<T: Scalar> TaggerNet<T> {
    pub fn new(vocab: Vocab, config: TaggerConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Encoder::new(vocab.len(), config.embed_dim, config.hidden, &mut rng);
        let out = Dense::new(encoder.output_dim(), Tag::ALL.len(), &mut rng);
        Self { config, vocab, encoder, out }
    }

    pub fn example<S: AsRef<str>>(&self, words: &[S], tags: Vec<Tag>) -> TaggedExample {
        TaggedExample { ids: self.vocab.encode(words), tags }
    }

    /// Per-token distributions over `O, A, A_`.
    pub fn tag_probs<S: AsRef<str>>(&self, words: &[S]) -> Vec<[T; 3]> {
        if words.is_empty() {
            return Vec::new();
        }
        let cache = self.encoder.forward(&self.vocab.encode(words));
        cache
            .states
            .iter()
            .map(|s| {
                let p = softmax(&self.out.forward(s));
                [p[0], p[1], p[2]]
            })
            .collect()
    }

    pub fn tag_words<S: AsRef<str>>(&self, words: &[S]) -> Vec<Tag> {
        self.tag_probs(words).iter().map(|p| Tag::ALL[argmax(p)]).collect()
    }

    /// Tags a single sentence.
    pub fn tag_sentence(&self, doc: &NormalizedDoc) -> Result<Vec<Tag>, AspectError> {
        if doc.is_empty() {
            return Err(AspectError::EmptyDoc);
        }
        let words: Vec<&str> = doc.words().collect();
        Ok(self.tag_words(&words))
    }

    /// Splits into sentences, tags each and returns document-level spans.
    pub fn extract(&self, doc: &NormalizedDoc) -> Vec<AspectSpan> {
        let words: Vec<&str> = doc.words().collect();
        let mut out = Vec::new();
        for sent in split_sentences(doc) {
            let tags = self.tag_words(&words[sent.clone()]);
            for r in decode_ranges(&tags) {
                out.push(AspectSpan::from_range(doc, sent.start + r.start..sent.start + r.end));
            }
        }
        out
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let hp = serde_json::to_value(&self.config).expect("config serializes");
        Checkpoint::capture(MODEL_KIND, hp, Some(self.vocab.clone()), self)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NeuralError> {
        ck.expect_kind(MODEL_KIND)?;
        let config: TaggerConfig =
            serde_json::from_value(ck.hyperparams.clone()).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        let vocab = ck.vocab.clone().ok_or_else(|| NeuralError::Checkpoint("missing vocabulary".into()))?;
        let mut net = Self::new(vocab, config, 0);
        ck.restore_into(&mut net)?;
        Ok(net)
    }
}

impl<T: Scalar> Network<T> for TaggerNet<T> {
    type Example = TaggedExample;

    fn loss(&self, ex: &TaggedExample, grad: Option<&mut Self>) -> Result<T, NeuralError> {
        if ex.ids.is_empty() {
            return Err(NeuralError::EmptyInput);
        }
        if ex.ids.len() != ex.tags.len() {
            return Err(NeuralError::ShapeMismatch(format!("{} tags for {} tokens", ex.tags.len(), ex.ids.len())));
        }
        let cache = self.encoder.forward(&ex.ids);
        let n = T::from_usize_lossy(ex.ids.len());
        let mut total = T::zero();
        let mut dlogits = Vec::with_capacity(ex.ids.len());
        for (s, tag) in cache.states.iter().zip(&ex.tags) {
            let logits = self.out.forward(s);
            let (l, mut d) = neural::Loss::SoftmaxCrossEntropy.evaluate(&logits, &neural::Target::Class(tag.index()))?;
            let w = self.config.class_weights.map_or(T::one(), |cw| T::lit(cw[tag.index()]));
            total += w * l / n;
            d.iter_mut().for_each(|v| *v *= w / n);
            dlogits.push(d);
        }
        if let Some(g) = grad {
            let mut dstates = vec![vec![T::zero(); self.encoder.output_dim()]; ex.ids.len()];
            for ((s, d), ds) in cache.states.iter().zip(&dlogits).zip(dstates.iter_mut()) {
                self.out.backward(s, d, &mut g.out, Some(ds));
            }
            self.encoder.backward(&ex.ids, &cache, &dstates, &mut g.encoder, !self.config.freeze_embeddings, None);
        }
        Ok(total)
    }

    fn params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        self.encoder.params(&mut out);
        self.out.params("out", &mut out);
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        self.encoder.params_mut(&mut out);
        self.out.params_mut("out", &mut out);
        out
    }

    fn is_trainable(&self, name: &str) -> bool {
        !(self.config.freeze_embeddings && name == EMBEDDING_PARAM)
    }
}

/// Builds a vocabulary from `data`, initializes (optionally from pretrained
/// vectors) and trains a tagger. Returns the model and its loss curve.
pub fn train_tagger<T: Scalar>(
    data: &[(Vec<String>, Vec<Tag>)],
    config: TaggerConfig,
    train: &TrainConfig,
    pretrained: Option<&EmbeddingTable<T>>,
) -> Result<(TaggerNet<T>, Vec<f64>), AspectError> {
    let vocab = Vocab::build(data.iter().flat_map(|(w, _)| w.iter().map(String::as_str)), config.min_count);
    let mut net = TaggerNet::new(vocab, config, train.seed);
    if let Some(p) = pretrained {
        net.encoder.load_pretrained(&net.vocab, p);
    }
    let mut examples = Vec::with_capacity(data.len());
    for (words, tags) in data {
        if words.len() != tags.len() {
            return Err(AspectError::LengthMismatch { tags: tags.len(), tokens: words.len() });
        }
        if !words.is_empty() {
            examples.push(net.example(words, tags.clone()));
        }
    }
    let curve = neural::train(&mut net, &examples, train)?;
    Ok((net, curve))
}
