//! Aspect-level sentiment: one positive / negative / neutral decision per
//! (sentence, aspect span) pair.
//!
//! The sentence is encoded by a bidirectional GRU; additive attention over
//! its states uses the mean embedding of the span tokens as the query, and
//! the attended context feeds a softmax classifier.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aspect::{split_sentences, AspectSpan};
use crate::embeddings::EmbeddingTable;
use crate::neural::{
    self, argmax, softmax, Attention, Checkpoint, Dense, Encoder, Loss, Network, NeuralError, Target, Tensor,
    TrainConfig, Vocab, EMBEDDING_PARAM,
};
use crate::scalar::Scalar;
use crate::textprep::NormalizedDoc;

pub const MODEL_KIND: &str = "aspect_sentiment";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Positive,
    Negative,
    Neutral,
}

impl SentimentLabel {
    /// Output order; also the tie-break order.
    pub const ALL: [SentimentLabel; 3] = [SentimentLabel::Positive, SentimentLabel::Negative, SentimentLabel::Neutral];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentLabel::Positive => "positive",
            SentimentLabel::Negative => "negative",
            SentimentLabel::Neutral => "neutral",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.as_str() == s.trim().to_ascii_lowercase())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectSentiment {
    pub span: AspectSpan,
    pub label: SentimentLabel,
    /// Probability of `label`.
    pub confidence: f64,
    /// Probabilities in positive, negative, neutral order.
    pub distribution: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SentimentError {
    #[error("span {start}..{end} outside a document of {len} tokens")]
    SpanOutOfRange { start: usize, end: usize, len: usize },
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SentimentConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub attention_dim: usize,
    pub min_count: usize,
    pub freeze_embeddings: bool,
    /// When false the classifier only separates positive from negative and
    /// neutral training examples are skipped.
    pub neutral: bool,
}

impl Default for SentimentConfig {
    fn default() -> Self {
        Self { embed_dim: 50, hidden: 64, attention_dim: 64, min_count: 1, freeze_embeddings: false, neutral: true }
    }
}

impl SentimentConfig {
    fn classes(&self) -> usize {
        if self.neutral {
            3
        } else {
            2
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanExample {
    pub ids: Vec<usize>,
    pub span: Range<usize>,
    pub label: SentimentLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentimentNet<T> {
    pub config: SentimentConfig,
    pub vocab: Vocab,
    pub encoder: Encoder<T>,
    pub attention: Attention<T>,
    pub out: Dense<T>,
}

impl<T: Scalar> SentimentNet<T> {
    pub fn new(vocab: Vocab, config: SentimentConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Encoder::new(vocab.len(), config.embed_dim, config.hidden, &mut rng);
        let attention = Attention::new(encoder.output_dim(), Some(config.embed_dim), config.attention_dim, &mut rng);
        let out = Dense::new(encoder.output_dim(), config.classes(), &mut rng);
        Self { config, vocab, encoder, attention, out }
    }

    fn query(&self, ids: &[usize], span: &Range<usize>) -> Vec<T> {
        let mut q = vec![T::zero(); self.encoder.embedding.dim()];
        for &id in &ids[span.clone()] {
            for (a, b) in q.iter_mut().zip(self.encoder.embedding.table.row(id)) {
                *a += *b;
            }
        }
        let n = T::from_usize_lossy(span.len());
        q.iter_mut().for_each(|v| *v /= n);
        q
    }

    fn logits(&self, ids: &[usize], span: &Range<usize>) -> Vec<T> {
        let cache = self.encoder.forward(ids);
        let q = self.query(ids, span);
        let attn = self.attention.forward(&cache.states, Some(&q));
        self.out.forward(&attn.context)
    }

    /// Class probabilities for `span` within the sentence `words`, in
    /// positive, negative, neutral order.
    pub fn distribution<S: AsRef<str>>(&self, words: &[S], span: Range<usize>) -> Result<[T; 3], SentimentError> {
        if span.start >= span.end || span.end > words.len() {
            return Err(SentimentError::SpanOutOfRange { start: span.start, end: span.end, len: words.len() });
        }
        let p = softmax(&self.logits(&self.vocab.encode(words), &span));
        Ok([p[0], p[1], p.get(2).copied().unwrap_or_else(T::zero)])
    }

    /// Classifies `span`, encoding the sentence(s) of `doc` that contain it.
    pub fn classify_aspect(&self, doc: &NormalizedDoc, span: &AspectSpan) -> Result<AspectSentiment, SentimentError> {
        if span.start >= span.end || span.end > doc.len() {
            return Err(SentimentError::SpanOutOfRange { start: span.start, end: span.end, len: doc.len() });
        }
        let sents = split_sentences(doc);
        let lo = sents.iter().find(|r| r.contains(&span.start)).map_or(0, |r| r.start);
        let hi = sents.iter().find(|r| r.contains(&(span.end - 1))).map_or(doc.len(), |r| r.end);
        let words: Vec<&str> = doc.tokens[lo..hi].iter().map(|t| t.normal.as_str()).collect();
        let p = self.distribution(&words, span.start - lo..span.end - lo)?;
        let best = argmax(&p);
        let distribution = p.map(|v| v.to_f64_lossless());
        Ok(AspectSentiment {
            span: span.clone(),
            label: SentimentLabel::ALL[best],
            confidence: distribution[best],
            distribution,
        })
    }

    /// One independent decision per span, in span order.
    pub fn classify_all(&self, doc: &NormalizedDoc, spans: &[AspectSpan]) -> Result<Vec<AspectSentiment>, SentimentError> {
        spans.iter().map(|s| self.classify_aspect(doc, s)).collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let hp = serde_json::to_value(&self.config).expect("config serializes");
        Checkpoint::capture(MODEL_KIND, hp, Some(self.vocab.clone()), self)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NeuralError> {
        ck.expect_kind(MODEL_KIND)?;
        let config: SentimentConfig =
            serde_json::from_value(ck.hyperparams.clone()).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        let vocab = ck.vocab.clone().ok_or_else(|| NeuralError::Checkpoint("missing vocabulary".into()))?;
        let mut net = Self::new(vocab, config, 0);
        ck.restore_into(&mut net)?;
        Ok(net)
    }
}

impl<T: Scalar> Network<T> for SentimentNet<T> {
    type Example = SpanExample;

    fn loss(&self, ex: &SpanExample, grad: Option<&mut Self>) -> Result<T, NeuralError> {
        if ex.span.start >= ex.span.end || ex.span.end > ex.ids.len() {
            return Err(NeuralError::ShapeMismatch(format!("span {:?} of {} tokens", ex.span, ex.ids.len())));
        }
        let cache = self.encoder.forward(&ex.ids);
        let q = self.query(&ex.ids, &ex.span);
        let attn = self.attention.forward(&cache.states, Some(&q));
        let logits = self.out.forward(&attn.context);
        let (l, dlogits) = Loss::SoftmaxCrossEntropy.evaluate(&logits, &Target::Class(ex.label.index()))?;
        if let Some(g) = grad {
            let h2 = self.encoder.output_dim();
            let mut dctx = vec![T::zero(); h2];
            self.out.backward(&attn.context, &dlogits, &mut g.out, Some(&mut dctx));
            let mut dstates = vec![vec![T::zero(); h2]; ex.ids.len()];
            let mut dq = vec![T::zero(); q.len()];
            self.attention.backward(&cache.states, Some(&q), &attn, &dctx, &mut g.attention, &mut dstates, Some(&mut dq));
            let n = T::from_usize_lossy(ex.span.len());
            let mut extra = vec![vec![T::zero(); q.len()]; ex.ids.len()];
            for row in &mut extra[ex.span.clone()] {
                for (a, b) in row.iter_mut().zip(&dq) {
                    *a = *b / n;
                }
            }
            let trainable = !self.config.freeze_embeddings;
            self.encoder.backward(&ex.ids, &cache, &dstates, &mut g.encoder, trainable, Some(&extra));
        }
        Ok(l)
    }

    fn params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        self.encoder.params(&mut out);
        self.attention.params("attention", &mut out);
        self.out.params("out", &mut out);
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        self.encoder.params_mut(&mut out);
        self.attention.params_mut("attention", &mut out);
        self.out.params_mut("out", &mut out);
        out
    }

    fn is_trainable(&self, name: &str) -> bool {
        !(self.config.freeze_embeddings && name == EMBEDDING_PARAM)
    }
}

/// A training sentence: words, aspect token range and gold label.
pub type SentimentSample = (Vec<String>, Range<usize>, SentimentLabel);

pub fn train_sentiment<T: Scalar>(
    data: &[SentimentSample],
    config: SentimentConfig,
    train: &TrainConfig,
    pretrained: Option<&EmbeddingTable<T>>,
) -> Result<(SentimentNet<T>, Vec<f64>), SentimentError> {
    let vocab = Vocab::build(data.iter().flat_map(|(w, _, _)| w.iter().map(String::as_str)), config.min_count);
    let neutral = config.neutral;
    let mut net = SentimentNet::new(vocab, config, train.seed);
    if let Some(p) = pretrained {
        net.encoder.load_pretrained(&net.vocab, p);
    }
    let mut examples = Vec::with_capacity(data.len());
    for (words, span, label) in data {
        if span.start >= span.end || span.end > words.len() {
            return Err(SentimentError::SpanOutOfRange { start: span.start, end: span.end, len: words.len() });
        }
        if !neutral && *label == SentimentLabel::Neutral {
            continue;
        }
        examples.push(SpanExample { ids: net.vocab.encode(words), span: span.clone(), label: *label });
    }
    let curve = neural::train(&mut net, &examples, train)?;
    Ok((net, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::{NormalizePolicy, Preprocessor};

    fn small(neutral: bool) -> SentimentNet<f64> {
        let cfg = SentimentConfig { embed_dim: 4, hidden: 3, attention_dim: 3, neutral, ..Default::default() };
        SentimentNet::new(Vocab::from_words(["food", "place"].map(String::from)), cfg, 2)
    }

    fn doc(text: &str) -> NormalizedDoc {
        Preprocessor::english(NormalizePolicy::default()).process("p", text)
    }

    #[test]
    fn zero_output_layer_gives_uniform_and_positive() {
        let mut net = small(true);
        net.out.w.fill_zero();
        let d = doc("the food is fine");
        let span = AspectSpan { start: 1, end: 2, surface: "food".into() };
        let r = net.classify_aspect(&d, &span).unwrap();
        assert_eq!(r.label, SentimentLabel::Positive);
        assert!((r.confidence - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn span_checks_and_whole_sentence_span() {
        let net = small(true);
        let d = doc("the food is fine");
        let bad = AspectSpan { start: 3, end: 9, surface: String::new() };
        assert!(matches!(net.classify_aspect(&d, &bad), Err(SentimentError::SpanOutOfRange { .. })));
        let all = AspectSpan { start: 0, end: 4, surface: String::new() };
        let r = net.classify_aspect(&d, &all).unwrap();
        assert!((r.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(net.classify_all(&d, &[]).unwrap().is_empty());
    }

    #[test]
    fn classify_all_is_per_span() {
        let net = small(true);
        let d = doc("the place is small but the food is fantastic");
        let a = AspectSpan { start: 1, end: 2, surface: "place".into() };
        let b = AspectSpan { start: 6, end: 7, surface: "food".into() };
        let both = net.classify_all(&d, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(both[0], net.classify_aspect(&d, &a).unwrap());
        assert_eq!(both[1], net.classify_aspect(&d, &b).unwrap());
        let swapped = net.classify_all(&d, &[b, a]).unwrap();
        assert_eq!(swapped[0], both[1]);
        assert_eq!(swapped[1], both[0]);
    }

    #[test]
    fn two_class_mode_never_says_neutral() {
        let net = small(false);
        let d = doc("food");
        let r = net.classify_aspect(&d, &AspectSpan { start: 0, end: 1, surface: "food".into() }).unwrap();
        assert_ne!(r.label, SentimentLabel::Neutral);
        assert_eq!(r.distribution[2], 0.0);
        assert!(r.confidence >= 0.5);
    }
}
