//! Small reference networks over real-valued inputs, used to exercise each
//! layer type in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Attention, Dense, Gru, Loss, Network, NeuralError, Target, Tensor};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseExample<T> {
    pub x: Vec<T>,
    pub target: Target,
}

/// `x → [tanh(Dense)] → Dense → loss`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet<T> {
    pub hidden: Option<Dense<T>>,
    pub out: Dense<T>,
    pub loss: Loss,
}

impl<T: Scalar> DenseNet<T> {
    pub fn new(input: usize, hidden: Option<usize>, output: usize, loss: Loss, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = hidden.map(|h| Dense::new(input, h, &mut rng));
        let out = Dense::new(hidden.unwrap_or(input), output, &mut rng);
        Self { hidden: h, out, loss }
    }

    fn features(&self, x: &[T]) -> Vec<T> {
        match &self.hidden {
            Some(h) => h.forward(x).into_iter().map(T::tanh).collect(),
            None => x.to_vec(),
        }
    }

    pub fn logits(&self, x: &[T]) -> Vec<T> {
        self.out.forward(&self.features(x))
    }
}

impl<T: Scalar> Network<T> for DenseNet<T> {
    type Example = DenseExample<T>;

    fn loss(&self, ex: &DenseExample<T>, grad: Option<&mut Self>) -> Result<T, NeuralError> {
        let feats = self.features(&ex.x);
        let logits = self.out.try_forward(&feats)?;
        let (l, dlogits) = self.loss.evaluate(&logits, &ex.target)?;
        if let Some(g) = grad {
            let mut dfeat = vec![T::zero(); feats.len()];
            self.out.backward(&feats, &dlogits, &mut g.out, Some(&mut dfeat));
            if let (Some(h), Some(gh)) = (&self.hidden, g.hidden.as_mut()) {
                let dpre: Vec<T> = dfeat.iter().zip(&feats).map(|(d, f)| *d * (T::one() - *f * *f)).collect();
                h.backward(&ex.x, &dpre, gh, None);
            }
        }
        Ok(l)
    }

    fn params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        if let Some(h) = &self.hidden {
            h.params("hidden", &mut out);
        }
        self.out.params("out", &mut out);
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        if let Some(h) = &mut self.hidden {
            h.params_mut("hidden", &mut out);
        }
        self.out.params_mut("out", &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqExample<T> {
    pub xs: Vec<Vec<T>>,
    pub query: Option<Vec<T>>,
    pub target: Target,
}

/// `xs → GRU → (attention | last state) → Dense → loss`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqNet<T> {
    pub gru: Gru<T>,
    pub attention: Option<Attention<T>>,
    pub out: Dense<T>,
    pub loss: Loss,
}

impl<T: Scalar> SeqNet<T> {
    /// `attention` is `None` for last-state pooling, `Some(query_dim)` for
    /// attention pooling (query dimension `None` inside means no query).
    pub fn new(
        input: usize,
        hidden: usize,
        attention: Option<Option<usize>>,
        output: usize,
        loss: Loss,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gru = Gru::new(input, hidden, &mut rng);
        let attention = attention.map(|q| Attention::new(hidden, q, hidden, &mut rng));
        let out = Dense::new(hidden, output, &mut rng);
        Self { gru, attention, out, loss }
    }
}

impl<T: Scalar> Network<T> for SeqNet<T> {
    type Example = SeqExample<T>;

    fn loss(&self, ex: &SeqExample<T>, grad: Option<&mut Self>) -> Result<T, NeuralError> {
        if ex.xs.is_empty() {
            return Err(NeuralError::EmptyInput);
        }
        let xs: Vec<&[T]> = ex.xs.iter().map(Vec::as_slice).collect();
        let steps = self.gru.run(&xs);
        let states: Vec<Vec<T>> = steps.iter().map(|s| s.h.clone()).collect();
        let query = ex.query.as_deref();
        let attn = self.attention.as_ref().map(|a| a.forward(&states, query));
        let ctx = match &attn {
            Some(c) => c.context.clone(),
            None => states.last().expect("non-empty").clone(),
        };
        let logits = self.out.try_forward(&ctx)?;
        let (l, dlogits) = self.loss.evaluate(&logits, &ex.target)?;
        if let Some(g) = grad {
            let mut dctx = vec![T::zero(); ctx.len()];
            self.out.backward(&ctx, &dlogits, &mut g.out, Some(&mut dctx));
            let mut dstates = vec![vec![T::zero(); self.gru.hidden_dim()]; states.len()];
            match (&self.attention, g.attention.as_mut(), &attn) {
                (Some(a), Some(ga), Some(cache)) => {
                    a.backward(&states, query, cache, &dctx, ga, &mut dstates, None);
                }
                _ => *dstates.last_mut().expect("non-empty") = dctx,
            }
            self.gru.backward(&xs, &steps, &dstates, &mut g.gru, None);
        }
        Ok(l)
    }

    fn params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        self.gru.params("gru", &mut out);
        if let Some(a) = &self.attention {
            a.params("attention", &mut out);
        }
        self.out.params("out", &mut out);
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        self.gru.params_mut("gru", &mut out);
        if let Some(a) = &mut self.attention {
            a.params_mut("attention", &mut out);
        }
        self.out.params_mut("out", &mut out);
        out
    }
}
