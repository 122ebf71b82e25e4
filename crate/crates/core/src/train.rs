//! Mini-batch training of the gating network.
//!
//! Plain gradient descent with momentum. The first epoch runs at a small
//! constant warm-up rate, the remaining epochs follow a cosine decay from the
//! initial rate towards zero (the rate is updated once per epoch).

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{LabelVector, Matrix, ProbMatrix};
use crate::swig::{swig_backward, swig_init, Batch, SwigConfig, SwigParams};

// stream of the shuffle generator; stream 0 of the same seed initializes the weights
const SHUFFLE_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub momentum: f64,
    pub warmup_epochs: usize,
    pub warmup_lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 128,
            initial_lr: 5e-3,
            momentum: 0.9,
            warmup_epochs: 1,
            warmup_lr: 1e-5,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.initial_lr.is_finite() && self.initial_lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(self.warmup_lr.is_finite() && self.warmup_lr >= 0.0) {
            return Err(Error::Config("warm-up learning rate must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Learning rate used throughout epoch `epoch` (0-based).
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        if epoch < self.warmup_epochs {
            return self.warmup_lr;
        }
        let span = (self.epochs - self.warmup_epochs.min(self.epochs)).max(1) as f64;
        let t = (epoch - self.warmup_epochs) as f64;
        0.5 * self.initial_lr * (1.0 + libm::cos(PI * t / span))
    }
}

/// What the trainer sees: gating inputs, frozen model probabilities, labels.
#[derive(Debug, Clone, Copy)]
pub struct TrainSet<'a> {
    pub inputs: &'a Matrix,
    pub probs: &'a [&'a ProbMatrix],
    pub anchor: usize,
    pub labels: &'a LabelVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: SwigParams,
    /// Mean per-sample loss of each epoch, measured before each batch update.
    pub epoch_losses: Vec<f64>,
}

pub fn swig_train(data: &TrainSet<'_>, config: &SwigConfig, train: &TrainConfig) -> Result<TrainOutcome> {
    let params = swig_init(config, train.seed)?;
    swig_train_from(params, data, config, train)
}

/// Trains starting from the given parameters.
pub fn swig_train_from(
    mut params: SwigParams,
    data: &TrainSet<'_>,
    config: &SwigConfig,
    train: &TrainConfig,
) -> Result<TrainOutcome> {
    train.validate()?;
    config.validate()?;
    let n = data.labels.len();
    if n == 0 {
        return Err(Error::Empty("training split"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..n).collect();
    let mut velocity = SwigParams::zeros(config);
    let mut epoch_losses = Vec::with_capacity(train.epochs);

    for epoch in 0..train.epochs {
        let lr = train.learning_rate(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(train.batch_size).enumerate() {
            let batch = Batch {
                inputs: data.inputs,
                probs: data.probs,
                anchor: data.anchor,
                labels: data.labels,
                indices: chunk,
            };
            let (loss, grad) = swig_backward(&params, config, &batch)?;
            if !loss.is_finite() || grad.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            loss_sum += loss * chunk.len() as f64;
            for ((p, v), g) in params
                .tensors_mut()
                .into_iter()
                .zip(velocity.tensors_mut())
                .zip(grad.tensors())
            {
                for ((pi, vi), gi) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                    *vi = train.momentum * *vi + gi;
                    *pi -= lr * *vi;
                }
            }
        }
        epoch_losses.push(loss_sum / n as f64);
    }
    Ok(TrainOutcome {
        params,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_warmup_then_cosine() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate(0), 1e-5);
        assert!((c.learning_rate(1) - 5e-3).abs() < 1e-18);
        // epochs 1..4 cover a quarter-period each over a span of 4
        let expected = 0.5 * 5e-3 * (1.0 + libm::cos(PI * 3.0 / 4.0));
        assert!((c.learning_rate(4) - expected).abs() < 1e-18);
        for e in 1..4 {
            assert!(c.learning_rate(e + 1) < c.learning_rate(e));
        }
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.epochs = 0;
        assert!(c.validate().is_err());
        let c = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            initial_lr: 0.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
