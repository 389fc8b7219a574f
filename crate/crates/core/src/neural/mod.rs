//! Small deterministic neural kernel: dense layers, gated recurrent cells,
//! additive attention, two losses, a seeded trainer and a finite-difference
//! gradient checker.

mod checkpoint;
mod encoder;
mod gradcheck;
mod layers;
mod loss;
mod probe;
mod tensor;
mod train;
mod vocab;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use encoder::{Encoder, EMBEDDING_PARAM};
pub use gradcheck::grad_check;
pub use layers::{argmax, softmax, Attention, AttentionCache, BiGru, BiGruCache, Dense, Embedding, Gru, GruStep};
pub use loss::{Loss, Target};
pub use probe::{DenseExample, DenseNet, SeqExample, SeqNet};
pub use tensor::{StoredTensor, Tensor};
pub use train::{train, train_with, Optimizer, TrainConfig};
pub use vocab::{Vocab, UNK};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value")]
    NonFinite,
    #[error("non-finite loss in epoch {epoch} (last finite loss {last_finite:?})")]
    NonFiniteLoss { epoch: usize, last_finite: Option<f64> },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("empty training set")]
    EmptyData,
    #[error("empty input sequence")]
    EmptyInput,
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
}

pub(crate) type ParamList<'a, T> = Vec<(String, &'a Tensor<T>)>;
pub(crate) type ParamListMut<'a, T> = Vec<(String, &'a mut Tensor<T>)>;

/// A model whose loss on one example can be differentiated with respect to
/// its named parameter tensors.
pub trait Network<T: Scalar>: Clone {
    type Example;

    /// Loss on `example`; when `grad` is given, the parameter gradient is
    /// added into it (a value of the same structure).
    fn loss(&self, example: &Self::Example, grad: Option<&mut Self>) -> Result<T, NeuralError>;

    /// Parameters in a fixed order with unique names.
    fn params(&self) -> Vec<(String, &Tensor<T>)>;

    /// Same order as [`Network::params`].
    fn params_mut(&mut self) -> Vec<(String, &mut Tensor<T>)>;

    /// Frozen parameters get no gradient and are skipped by the optimizer.
    fn is_trainable(&self, _name: &str) -> bool {
        true
    }

    /// A copy with every parameter set to zero, used as a gradient buffer.
    fn zeroed(&self) -> Self {
        let mut g = self.clone();
        for (_, t) in g.params_mut() {
            t.fill_zero();
        }
        g
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }
}
