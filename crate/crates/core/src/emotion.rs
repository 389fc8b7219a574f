//! Multi-label emotion detection: BiGRU encoder, query-free attention
//! pooling and one independent sigmoid per emotion.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingTable;
use crate::metrics::Prf;
use crate::neural::{
    self, Attention, Checkpoint, Dense, Encoder, Loss, Network, NeuralError, Target, Tensor, TrainConfig, Vocab,
    EMBEDDING_PARAM,
};
use crate::scalar::Scalar;
use crate::textprep::NormalizedDoc;

pub const MODEL_KIND: &str = "emotion";
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Anger,
    Anticipation,
    Disgust,
    Fear,
    Joy,
    Love,
    Optimism,
    Pessimism,
    Sadness,
    Surprise,
    Trust,
}

impl Emotion {
    pub const ALL: [Emotion; 11] = [
        Emotion::Anger,
        Emotion::Anticipation,
        Emotion::Disgust,
        Emotion::Fear,
        Emotion::Joy,
        Emotion::Love,
        Emotion::Optimism,
        Emotion::Pessimism,
        Emotion::Sadness,
        Emotion::Surprise,
        Emotion::Trust,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Emotion::Anger => "anger",
            Emotion::Anticipation => "anticipation",
            Emotion::Disgust => "disgust",
            Emotion::Fear => "fear",
            Emotion::Joy => "joy",
            Emotion::Love => "love",
            Emotion::Optimism => "optimism",
            Emotion::Pessimism => "pessimism",
            Emotion::Sadness => "sadness",
            Emotion::Surprise => "surprise",
            Emotion::Trust => "trust",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().to_ascii_lowercase();
        Self::ALL.into_iter().find(|e| e.as_str() == s)
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionVector {
    pub probabilities: BTreeMap<Emotion, f64>,
    /// Emotions with probability strictly above the threshold.
    pub labels: BTreeSet<Emotion>,
}

impl EmotionVector {
    pub fn from_probs(probs: [f64; 11], threshold: f64) -> Self {
        let probabilities: BTreeMap<Emotion, f64> = Emotion::ALL.into_iter().zip(probs).collect();
        let labels = labels_above(&probabilities, threshold);
        Self { probabilities, labels }
    }
}

pub fn labels_above(probs: &BTreeMap<Emotion, f64>, threshold: f64) -> BTreeSet<Emotion> {
    probs.iter().filter(|(_, &p)| p > threshold).map(|(&e, _)| e).collect()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmotionError {
    #[error("empty document")]
    EmptyDoc,
    #[error("{preds} predictions for {golds} gold sets")]
    LengthMismatch { preds: usize, golds: usize },
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    #[default]
    Micro,
    Macro,
}

/// Multi-label precision / recall / F1. Micro pools every (example, label)
/// decision; macro averages the per-emotion scores.
pub fn evaluate_multilabel(
    preds: &[BTreeSet<Emotion>],
    golds: &[BTreeSet<Emotion>],
    averaging: Averaging,
) -> Result<Prf, EmotionError> {
    if preds.len() != golds.len() {
        return Err(EmotionError::LengthMismatch { preds: preds.len(), golds: golds.len() });
    }
    let mut tp = [0usize; 11];
    let mut np = [0usize; 11];
    let mut ng = [0usize; 11];
    for (p, g) in preds.iter().zip(golds) {
        for e in p {
            np[e.index()] += 1;
            if g.contains(e) {
                tp[e.index()] += 1;
            }
        }
        for e in g {
            ng[e.index()] += 1;
        }
    }
    Ok(match averaging {
        Averaging::Micro => Prf::from_counts(tp.iter().sum(), np.iter().sum(), ng.iter().sum()),
        Averaging::Macro => {
            let per: Vec<Prf> = (0..11).map(|i| Prf::from_counts(tp[i], np[i], ng[i])).collect();
            let mean = |f: fn(&Prf) -> f64| per.iter().map(f).sum::<f64>() / per.len() as f64;
            Prf { precision: mean(|p| p.precision), recall: mean(|p| p.recall), f1: mean(|p| p.f1) }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmotionConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub attention_dim: usize,
    pub min_count: usize,
    pub freeze_embeddings: bool,
}

impl Default for EmotionConfig {
    fn default() -> Self {
        Self { embed_dim: 50, hidden: 64, attention_dim: 64, min_count: 1, freeze_embeddings: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmotionExample {
    pub ids: Vec<usize>,
    pub labels: [bool; 11],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmotionNet<T> {
    pub config: EmotionConfig,
    pub vocab: Vocab,
    pub encoder: Encoder<T>,
    pub attention: Attention<T>,
    pub out: Dense<T>,
}

impl<T: Scalar> EmotionNet<T> {
    pub fn new(vocab: Vocab, config: EmotionConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Encoder::new(vocab.len(), config.embed_dim, config.hidden, &mut rng);
        let attention = Attention::new(encoder.output_dim(), None, config.attention_dim, &mut rng);
        let out = Dense::new(encoder.output_dim(), Emotion::ALL.len(), &mut rng);
        Self { config, vocab, encoder, attention, out }
    }

    /// Per-emotion probabilities for a non-empty word sequence.
    pub fn probabilities<S: AsRef<str>>(&self, words: &[S]) -> Result<[T; 11], EmotionError> {
        if words.is_empty() {
            return Err(EmotionError::EmptyDoc);
        }
        let cache = self.encoder.forward(&self.vocab.encode(words));
        let attn = self.attention.forward(&cache.states, None);
        let logits = self.out.forward(&attn.context);
        let mut p = [T::zero(); 11];
        for (o, l) in p.iter_mut().zip(logits) {
            *o = l.sigmoid();
        }
        Ok(p)
    }

    pub fn detect_emotions(&self, doc: &NormalizedDoc, threshold: f64) -> Result<EmotionVector, EmotionError> {
        let words: Vec<&str> = doc.words().collect();
        let p = self.probabilities(&words)?;
        Ok(EmotionVector::from_probs(p.map(|v| v.to_f64_lossless()), threshold))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let hp = serde_json::to_value(&self.config).expect("config serializes");
        Checkpoint::capture(MODEL_KIND, hp, Some(self.vocab.clone()), self)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NeuralError> {
        ck.expect_kind(MODEL_KIND)?;
        let config: EmotionConfig =
            serde_json::from_value(ck.hyperparams.clone()).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        let vocab = ck.vocab.clone().ok_or_else(|| NeuralError::Checkpoint("missing vocabulary".into()))?;
        let mut net = Self::new(vocab, config, 0);
        ck.restore_into(&mut net)?;
        Ok(net)
    }
}

impl<T: Scalar> Network<T> for EmotionNet<T> {
    type Example = EmotionExample;

    fn loss(&self, ex: &EmotionExample, grad: Option<&mut Self>) -> Result<T, NeuralError> {
        if ex.ids.is_empty() {
            return Err(NeuralError::EmptyInput);
        }
        let cache = self.encoder.forward(&ex.ids);
        let attn = self.attention.forward(&cache.states, None);
        let logits = self.out.forward(&attn.context);
        let (l, dlogits) = Loss::SigmoidBinaryCrossEntropy.evaluate(&logits, &Target::Labels(ex.labels.to_vec()))?;
        if let Some(g) = grad {
            let h2 = self.encoder.output_dim();
            let mut dctx = vec![T::zero(); h2];
            self.out.backward(&attn.context, &dlogits, &mut g.out, Some(&mut dctx));
            let mut dstates = vec![vec![T::zero(); h2]; ex.ids.len()];
            self.attention.backward(&cache.states, None, &attn, &dctx, &mut g.attention, &mut dstates, None);
            let trainable = !self.config.freeze_embeddings;
            self.encoder.backward(&ex.ids, &cache, &dstates, &mut g.encoder, trainable, None);
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

pub fn train_emotion<T: Scalar>(
    data: &[(Vec<String>, [bool; 11])],
    config: EmotionConfig,
    train: &TrainConfig,
    pretrained: Option<&EmbeddingTable<T>>,
) -> Result<(EmotionNet<T>, Vec<f64>), EmotionError> {
    let vocab = Vocab::build(data.iter().flat_map(|(w, _)| w.iter().map(String::as_str)), config.min_count);
    let mut net = EmotionNet::new(vocab, config, train.seed);
    if let Some(p) = pretrained {
        net.encoder.load_pretrained(&net.vocab, p);
    }
    let examples: Vec<EmotionExample> = data
        .iter()
        .filter(|(w, _)| !w.is_empty())
        .map(|(w, l)| EmotionExample { ids: net.vocab.encode(w), labels: *l })
        .collect();
    let curve = neural::train(&mut net, &examples, train)?;
    Ok((net, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::{NormalizePolicy, Preprocessor};
    use proptest::prelude::*;

    fn small() -> EmotionNet<f64> {
        let cfg = EmotionConfig { embed_dim: 4, hidden: 3, attention_dim: 3, ..Default::default() };
        EmotionNet::new(Vocab::from_words(["happy", "sad"].map(String::from)), cfg, 4)
    }

    #[test]
    fn zero_output_layer_gives_no_labels() {
        let mut net = small();
        net.out.w.fill_zero();
        let doc = Preprocessor::english(NormalizePolicy::default()).process("p", "so happy today");
        let v = net.detect_emotions(&doc, DEFAULT_THRESHOLD).unwrap();
        assert!(v.probabilities.values().all(|&p| p == 0.5));
        assert!(v.labels.is_empty());
    }

    #[test]
    fn single_oov_token_and_empty_doc() {
        let net = small();
        let pre = Preprocessor::english(NormalizePolicy::default());
        let v = net.detect_emotions(&pre.process("p", "qwertyuiop"), DEFAULT_THRESHOLD).unwrap();
        assert_eq!(v.probabilities.len(), 11);
        assert!(v.probabilities.values().all(|p| (0.0..=1.0).contains(p)));
        assert_eq!(net.detect_emotions(&NormalizedDoc::default(), 0.5), Err(EmotionError::EmptyDoc));
    }

    #[test]
    fn zeroing_one_output_unit_only_moves_that_label() {
        let net = small();
        let words = ["happy", "sad", "happy"];
        let before = net.probabilities(&words).unwrap();
        let mut cut = net.clone();
        let k = Emotion::Joy.index();
        cut.out.w.row_mut(k).iter_mut().for_each(|v| *v = 0.0);
        let after = cut.probabilities(&words).unwrap();
        for i in 0..11 {
            if i == k {
                assert_eq!(after[i], 0.5);
            } else {
                assert_eq!(after[i], before[i]);
            }
        }
    }

    #[test]
    fn multilabel_examples() {
        let g = vec![BTreeSet::from([Emotion::Joy, Emotion::Optimism])];
        assert_eq!(evaluate_multilabel(&g, &g, Averaging::Micro).unwrap().f1, 1.0);
        let p = vec![BTreeSet::from([Emotion::Joy])];
        let s = evaluate_multilabel(&p, &g, Averaging::Micro).unwrap();
        assert_eq!((s.precision, s.recall), (1.0, 0.5));
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!(evaluate_multilabel(&p, &[], Averaging::Micro).is_err());
    }

    proptest! {
        #[test]
        fn raising_threshold_never_adds_labels(ps in proptest::array::uniform11(0.0f64..1.0), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let v = EmotionVector::from_probs(ps, lo);
            let w = EmotionVector::from_probs(ps, hi);
            prop_assert!(w.labels.is_subset(&v.labels));
            prop_assert_eq!(labels_above(&v.probabilities, hi), w.labels);
        }
    }
}
