use rand::Rng;

use super::{BiGru, BiGruCache, Embedding, ParamList, ParamListMut};
use crate::embeddings::EmbeddingTable;
use crate::scalar::Scalar;

use super::Vocab;

/// Embedding lookup followed by a bidirectional GRU; shared by the three
/// text models.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder<T> {
    pub embedding: Embedding<T>,
    pub rnn: BiGru<T>,
}

pub const EMBEDDING_PARAM: &str = "encoder.embedding";

impl<T: Scalar> Encoder<T> {
    pub fn new<R: Rng>(vocab: usize, embed_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let embedding = Embedding::new(vocab, embed_dim, rng);
        let rnn = BiGru::new(embed_dim, hidden, rng);
        Self { embedding, rnn }
    }

    pub fn output_dim(&self) -> usize {
        self.rnn.output_dim()
    }

    /// Overwrites rows of words found in `table`; returns how many were.
    pub fn load_pretrained(&mut self, vocab: &Vocab, table: &EmbeddingTable<T>) -> usize {
        if table.dim() != self.embedding.dim() {
            return 0;
        }
        let mut hits = 0;
        for (id, w) in vocab.words().iter().enumerate() {
            if let Some(v) = table.get(w) {
                self.embedding.table.row_mut(id).copy_from_slice(v);
                hits += 1;
            }
        }
        hits
    }

    pub fn forward(&self, ids: &[usize]) -> BiGruCache<T> {
        let xs = self.embedding.rows(ids);
        self.rnn.forward(&xs)
    }

    /// `dxs_extra` carries gradients reaching the embedding rows by another
    /// path (such as a span query).
    pub fn backward(
        &self,
        ids: &[usize],
        cache: &BiGruCache<T>,
        dstates: &[Vec<T>],
        grad: &mut Self,
        embeddings_trainable: bool,
        dxs_extra: Option<&[Vec<T>]>,
    ) {
        let xs = self.embedding.rows(ids);
        if !embeddings_trainable {
            self.rnn.backward(&xs, cache, dstates, &mut grad.rnn, None);
            return;
        }
        let mut dxs = match dxs_extra {
            Some(d) => d.to_vec(),
            None => vec![vec![T::zero(); self.embedding.dim()]; ids.len()],
        };
        self.rnn.backward(&xs, cache, dstates, &mut grad.rnn, Some(&mut dxs));
        self.embedding.backward(ids, &dxs, &mut grad.embedding);
    }

    pub(crate) fn params<'a>(&'a self, out: &mut ParamList<'a, T>) {
        out.push((EMBEDDING_PARAM.to_string(), &self.embedding.table));
        self.rnn.params("encoder.rnn", out);
    }

    pub(crate) fn params_mut<'a>(&'a mut self, out: &mut ParamListMut<'a, T>) {
        out.push((EMBEDDING_PARAM.to_string(), &mut self.embedding.table));
        self.rnn.params_mut("encoder.rnn", out);
    }
}
