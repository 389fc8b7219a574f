use serde::{Deserialize, Serialize};

use super::{softmax, NeuralError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    SoftmaxCrossEntropy,
    SigmoidBinaryCrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    Class(usize),
    Labels(Vec<bool>),
}

impl Loss {
    /// Loss value and its gradient with respect to the logits.
    pub fn evaluate<T: Scalar>(&self, logits: &[T], target: &Target) -> Result<(T, Vec<T>), NeuralError> {
        match (self, target) {
            (Loss::SoftmaxCrossEntropy, Target::Class(y)) => {
                if *y >= logits.len() {
                    return Err(NeuralError::ShapeMismatch(format!("class {y} of {}", logits.len())));
                }
                Ok(softmax_cross_entropy(logits, *y))
            }
            (Loss::SigmoidBinaryCrossEntropy, Target::Labels(ys)) => {
                if ys.len() != logits.len() {
                    return Err(NeuralError::ShapeMismatch(format!("{} labels for {} logits", ys.len(), logits.len())));
                }
                Ok(sigmoid_binary_cross_entropy(logits, ys))
            }
            _ => Err(NeuralError::ShapeMismatch("target kind does not match loss".into())),
        }
    }
}

/// `-ln softmax(logits)[y]` and `softmax(logits) - onehot(y)`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &[T], y: usize) -> (T, Vec<T>) {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = m + logits.iter().map(|&x| (x - m).exp()).sum::<T>().ln();
    let mut g = softmax(logits);
    g[y] -= T::one();
    (lse - logits[y], g)
}

/// Sum over labels of `-[y ln σ(x) + (1-y) ln(1-σ(x))]`.
pub fn sigmoid_binary_cross_entropy<T: Scalar>(logits: &[T], ys: &[bool]) -> (T, Vec<T>) {
    let mut loss = T::zero();
    let mut g = Vec::with_capacity(logits.len());
    for (&x, &y) in logits.iter().zip(ys) {
        let yt = if y { T::one() } else { T::zero() };
        loss += x.max(T::zero()) - x * yt + (-x.abs()).exp().ln_1p();
        g.push(x.sigmoid() - yt);
    }
    (loss, g)
}
