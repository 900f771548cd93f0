use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LossSpec, Network};
use crate::imbalance::Instance;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub rng_seed: u64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 20,
            rng_seed: 0,
            early_stop_patience: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// First-order optimizer with lazily allocated moment buffers.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    lr: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl OptimizerState {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient layout differs");
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.into_iter().zip(grads) {
                    for (w, d) in p.iter_mut().zip(g) {
                        *w -= self.lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.m.is_empty() {
                    self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
                    self.v = self.m.clone();
                }
                self.step += 1;
                let c1 = 1.0 - BETA1.powi(self.step);
                let c2 = 1.0 - BETA2.powi(self.step);
                for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
                    for (((w, &d), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *m = BETA1 * *m + (1.0 - BETA1) * d;
                        *v = BETA2 * *v + (1.0 - BETA2) * d * d;
                        *w -= self.lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}

/// Something [`train`] can optimize.
pub trait Model: Clone {
    type Sample;

    fn label(sample: &Self::Sample) -> bool;

    /// One optimizer update on `batch`; returns the batch's mean loss
    /// before the update.
    fn step(&mut self, batch: &[&Self::Sample], loss: &LossSpec, opt: &mut OptimizerState) -> Result<f64>;

    fn mean_loss(&self, samples: &[Self::Sample], loss: &LossSpec) -> Result<f64>;
}

impl Model for Network {
    type Sample = Instance;

    fn label(sample: &Instance) -> bool {
        sample.label
    }

    fn step(&mut self, batch: &[&Instance], loss: &LossSpec, opt: &mut OptimizerState) -> Result<f64> {
        let (value, grads) = self.gradient(batch, loss)?;
        if value.is_finite() {
            opt.step(self.slices_mut(), grads.slices());
        }
        Ok(value)
    }

    fn mean_loss(&self, samples: &[Instance], loss: &LossSpec) -> Result<f64> {
        Network::mean_loss(self, samples, loss)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: M,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

/// Minibatch training with per-epoch seeded shuffling and early stopping on
/// validation loss. Deterministic for a given seed.
pub fn train<M: Model>(
    model: M,
    train_set: &[M::Sample],
    valid_set: &[M::Sample],
    loss: &LossSpec,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<M>> {
    cfg.validate()?;
    loss.validate()?;
    if cfg.epochs == 0 {
        return Ok(TrainOutcome {
            model,
            history: Vec::new(),
            best_epoch: None,
        });
    }
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::Config("training and validation sets must be nonempty".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.learning_rate);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut current = model;
    let mut best = current.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = None;
    let mut stale = 0;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&M::Sample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let value = current.step(&batch, loss, &mut opt)?;
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            total += value * batch.len() as f64;
        }
        let train_loss = total / train_set.len() as f64;
        let valid_loss = current.mean_loss(valid_set, loss)?;
        if !valid_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: usize::MAX,
            });
        }
        log::debug!("epoch {epoch}: train {train_loss:.6} valid {valid_loss:.6}");
        history.push(EpochRecord {
            epoch,
            train_loss,
            valid_loss,
        });
        if valid_loss < best_loss {
            best_loss = valid_loss;
            best = current.clone();
            best_epoch = Some(epoch);
            stale = 0;
        } else {
            stale += 1;
            if cfg.early_stop_patience > 0 && stale >= cfg.early_stop_patience {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model: best,
        history,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{Activation, TowerConfig};
    use rand::Rng;
    use std::sync::Arc;

    /// Label is the sign of the method vector's first component.
    fn separable(n: usize, seed: u64) -> Vec<Instance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let planted: f64 = rng.gen_range(-1.0..1.0);
                let mut m: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                m[0] = planted;
                let r: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                Instance {
                    report_vec: Arc::from(r),
                    method_vec: Arc::from(m),
                    label: planted > 0.0,
                    bug_id: format!("b{}", i / 10),
                    method_id: format!("m{i}"),
                    report_time: i as i64,
                }
            })
            .collect()
    }

    fn small_net(seed: u64) -> Network {
        Network::new(
            &TowerConfig::new(vec![3, 8, 4], Activation::Relu).unwrap(),
            &TowerConfig::new(vec![4, 8, 4], Activation::Relu).unwrap(),
            seed,
        )
        .unwrap()
    }

    fn accuracy(net: &Network, data: &[Instance]) -> f64 {
        let correct = data
            .iter()
            .filter(|x| (net.forward(&x.report_vec, &x.method_vec).unwrap() > 0.5) == x.label)
            .count();
        correct as f64 / data.len() as f64
    }

    #[test]
    fn learns_separable_set() {
        let train_set = separable(400, 1);
        let valid = separable(200, 2);
        let cfg = TrainConfig {
            epochs: 50,
            learning_rate: 0.01,
            early_stop_patience: 10,
            ..TrainConfig::default()
        };
        let out = train(small_net(3), &train_set, &valid, &LossSpec::bce(), &cfg).unwrap();
        assert!(accuracy(&out.model, &valid) >= 0.95, "{}", accuracy(&out.model, &valid));
        assert!(out.history.len() <= 50);
    }

    #[test]
    fn zero_epochs_returns_input() {
        let net = small_net(4);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = train(net.clone(), &[], &[], &LossSpec::bce(), &cfg).unwrap();
        assert_eq!(out.model, net);
        assert!(out.history.is_empty());
    }

    #[test]
    fn same_seed_same_parameters() {
        let data = separable(120, 5);
        let valid = separable(40, 6);
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 7,
            rng_seed: 42,
            ..TrainConfig::default()
        };
        let a = train(small_net(1), &data, &valid, &LossSpec::focal(0.25, 2.0), &cfg).unwrap();
        let b = train(small_net(1), &data, &valid, &LossSpec::focal(0.25, 2.0), &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
        let sgd = TrainConfig {
            optimizer: OptimizerKind::Sgd,
            ..cfg
        };
        let c = train(small_net(1), &data, &valid, &LossSpec::bce(), &sgd).unwrap();
        let d = train(small_net(1), &data, &valid, &LossSpec::bce(), &sgd).unwrap();
        assert_eq!(c.model, d.model);
    }

    #[test]
    fn non_finite_input_aborts() {
        let mut data = separable(20, 7);
        data[3].method_vec = Arc::from(vec![f64::NAN, 0.0, 0.0, 0.0]);
        let valid = separable(10, 8);
        let err = train(small_net(1), &data, &valid, &LossSpec::bce(), &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 0, .. }), "{err:?}");
    }
}
