use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Network, NeuralError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    /// Maximum global gradient norm.
    pub clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { seed: 7, learning_rate: 0.01, epochs: 30, batch_size: 8, optimizer: Optimizer::adam(), clip: Some(5.0) }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NeuralError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NeuralError::Config("learning rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(NeuralError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(NeuralError::Config("batch size must be at least 1".into()));
        }
        if self.clip.is_some_and(|c| !(c > 0.0)) {
            return Err(NeuralError::Config("clip must be positive".into()));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                return Err(NeuralError::Config("adam needs betas in [0,1) and eps > 0".into()));
            }
        }
        Ok(())
    }
}

/// Minibatch training; returns the mean example loss of every epoch.
pub fn train<T: Scalar, N: Network<T>>(
    model: &mut N,
    data: &[N::Example],
    cfg: &TrainConfig,
) -> Result<Vec<f64>, NeuralError> {
    train_with(model, data, cfg, |_, _| ControlFlow::Continue(()))
}

/// Like [`train`], calling `on_epoch(epoch, mean_loss)` after each epoch
/// (1-based); `Break` stops early.
pub fn train_with<T, N, F>(
    model: &mut N,
    data: &[N::Example],
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<Vec<f64>, NeuralError>
where
    T: Scalar,
    N: Network<T>,
    F: FnMut(usize, f64) -> ControlFlow<()>,
{
    cfg.validate()?;
    if data.is_empty() {
        return Err(NeuralError::EmptyData);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let trainable: Vec<bool> = model.params().iter().map(|(n, _)| model.is_trainable(n)).collect();
    let mut state = OptState::new(model, cfg.optimizer);
    let mut grad = model.zeroed();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            for (_, g) in grad.params_mut() {
                g.fill_zero();
            }
            for &i in batch {
                let l = model.loss(&data[i], Some(&mut grad))?.to_f64_lossless();
                if !l.is_finite() {
                    return Err(NeuralError::NonFiniteLoss { epoch, last_finite: curve.last().copied() });
                }
                total += l;
            }
            let scale = T::one() / T::from_usize_lossy(batch.len());
            let mut sq = T::zero();
            for ((_, g), &on) in grad.params_mut().into_iter().zip(&trainable) {
                for v in g.values_mut() {
                    *v *= scale;
                    if on {
                        sq += *v * *v;
                    }
                }
            }
            let gnorm = sq.sqrt();
            if !gnorm.is_finite() {
                return Err(NeuralError::NonFiniteLoss { epoch, last_finite: curve.last().copied() });
            }
            let clip_scale = match cfg.clip {
                Some(c) if gnorm > T::lit(c) => T::lit(c) / gnorm,
                _ => T::one(),
            };
            state.step(model, &grad, &trainable, cfg.learning_rate, clip_scale);
        }
        let mean = total / data.len() as f64;
        curve.push(mean);
        if on_epoch(epoch, mean).is_break() {
            break;
        }
    }
    Ok(curve)
}

struct OptState<T> {
    kind: Optimizer,
    t: i32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> OptState<T> {
    fn new<N: Network<T>>(model: &N, kind: Optimizer) -> Self {
        let (m, v) = match kind {
            Optimizer::Sgd => (Vec::new(), Vec::new()),
            Optimizer::Adam { .. } => {
                let z: Vec<Vec<T>> = model.params().iter().map(|(_, t)| vec![T::zero(); t.len()]).collect();
                (z.clone(), z)
            }
        };
        Self { kind, t: 0, m, v }
    }

    fn step<N: Network<T>>(&mut self, model: &mut N, grad: &N, trainable: &[bool], lr: f64, clip: T) {
        self.t += 1;
        let lr = T::lit(lr);
        let grads = grad.params();
        for (k, ((_, p), (_, g))) in model.params_mut().into_iter().zip(grads).enumerate() {
            if !trainable[k] {
                continue;
            }
            match self.kind {
                Optimizer::Sgd => {
                    for (w, d) in p.values_mut().iter_mut().zip(g.values()) {
                        *w -= lr * clip * *d;
                    }
                }
                Optimizer::Adam { beta1, beta2, eps } => {
                    let (b1, b2, e) = (T::lit(beta1), T::lit(beta2), T::lit(eps));
                    let c1 = T::one() - b1.powi(self.t);
                    let c2 = T::one() - b2.powi(self.t);
                    let (m, v) = (&mut self.m[k], &mut self.v[k]);
                    for (i, (w, d)) in p.values_mut().iter_mut().zip(g.values()).enumerate() {
                        let d = clip * *d;
                        m[i] = b1 * m[i] + (T::one() - b1) * d;
                        v[i] = b2 * v[i] + (T::one() - b2) * d * d;
                        *w -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + e);
                    }
                }
            }
        }
    }
}
