use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{cross_entropy, CnnModel, LayerSpec, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub minibatch: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    /// Standard deviation of the Gaussian used for freshly drawn fully
    /// connected parameters during transfer.
    pub init_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            minibatch: 100,
            learning_rate: 0.001,
            momentum: 0.9,
            seed: 0,
            init_std: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.minibatch == 0 {
            return Err(Error::invalid("epochs and minibatch must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return Err(Error::invalid("init std must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledSet {
    pub samples: Vec<Tensor>,
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn push(&mut self, sample: Tensor, label: usize) {
        self.samples.push(sample);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// Mean cross-entropy loss of `model` over the set.
    pub fn mean_loss(&self, model: &CnnModel) -> Result<f64> {
        let mut total = 0.0;
        for (x, y) in self.samples.iter().zip(&self.labels) {
            total += cross_entropy(&model.forward(x)?, *y);
        }
        Ok(total / self.len().max(1) as f64)
    }

    /// Fraction of samples whose most probable class equals the label.
    pub fn accuracy(&self, model: &CnnModel) -> Result<f64> {
        let mut correct = 0usize;
        for (x, y) in self.samples.iter().zip(&self.labels) {
            let p = model.forward(x)?;
            let best = (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b });
            correct += (best == *y) as usize;
        }
        Ok(correct as f64 / self.len().max(1) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Per-epoch losses; `Display` renders one `epoch N train_loss x val_loss y`
/// line per epoch (`-` when there is no validation set).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl fmt::Display for TrainLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.epochs {
            write!(f, "epoch {} train_loss {:.6}", e.epoch, e.train_loss)?;
            match e.val_loss {
                Some(v) => writeln!(f, " val_loss {v:.6}")?,
                None => writeln!(f, " val_loss -")?,
            }
        }
        Ok(())
    }
}

/// Minibatch SGD with momentum on the mean cross-entropy loss.
///
/// The sample order is reshuffled every epoch from a generator seeded once
/// with `cfg.seed`. Gradients within a minibatch are summed in sample order,
/// so results are bit-reproducible.
pub fn train(model: &CnnModel, data: &LabeledSet, val: &LabeledSet, cfg: &TrainConfig) -> Result<(CnnModel, TrainLog)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if data.samples.len() != data.labels.len() {
        return Err(Error::invalid("training samples and labels differ in length"));
    }
    let classes = model.num_classes();
    if let Some(bad) = data.labels.iter().chain(&val.labels).find(|l| **l >= classes) {
        return Err(Error::invalid(format!("label {bad} out of range for {classes} classes")));
    }
    let mut model = model.clone();
    let mut velocity: Vec<Vec<f64>> = model.parameters().iter().map(|(_, p)| vec![0.0; p.len()]).collect();
    let mut grad_sum: Vec<Vec<f64>> = velocity.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = TrainLog::default();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch, idx) in order.chunks(cfg.minibatch).enumerate() {
            grad_sum.iter_mut().for_each(|g| g.fill(0.0));
            let mut batch_loss = 0.0;
            for &i in idx {
                let (loss, g) = model.backward(&data.samples[i], data.labels[i])?;
                batch_loss += loss;
                for (acc, (_, block)) in grad_sum.iter_mut().zip(&g.blocks) {
                    acc.iter_mut().zip(block).for_each(|(a, b)| *a += b);
                }
            }
            let scale = 1.0 / idx.len() as f64;
            let mean_loss = batch_loss * scale;
            if !mean_loss.is_finite() || grad_sum.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    batch,
                    loss: mean_loss,
                });
            }
            epoch_loss += batch_loss;
            for ((_, params), (v, g)) in model.parameters_mut().into_iter().zip(velocity.iter_mut().zip(&grad_sum)) {
                for ((p, vi), gi) in params.iter_mut().zip(v.iter_mut()).zip(g) {
                    *vi = cfg.momentum * *vi - cfg.learning_rate * gi * scale;
                    *p += *vi;
                }
            }
        }
        let val_loss = if val.is_empty() { None } else { Some(val.mean_loss(&model)?) };
        let entry = EpochLog {
            epoch,
            train_loss: epoch_loss / data.len() as f64,
            val_loss,
        };
        log::info!(
            "epoch {} train_loss {:.6} val_loss {}",
            entry.epoch,
            entry.train_loss,
            val_loss.map_or("-".to_string(), |v| format!("{v:.6}"))
        );
        log.epochs.push(entry);
    }
    Ok((model, log))
}

/// Trains a freshly He-initialized model of layout `specs` on an auxiliary
/// multi-class task; the result serves as a transfer source.
pub fn pretrain_auxiliary(data: &LabeledSet, val: &LabeledSet, specs: &[LayerSpec], cfg: &TrainConfig) -> Result<(CnnModel, TrainLog)> {
    let first = data.samples.first().ok_or_else(|| Error::invalid("auxiliary set is empty"))?;
    let classes = data.num_classes();
    if classes < 4 {
        return Err(Error::invalid(format!("auxiliary task needs at least 4 classes, found {classes}")));
    }
    let mut specs = specs.to_vec();
    let n = specs.len();
    if n >= 2 {
        if let LayerSpec::FullyConnected { units } = &mut specs[n - 2] {
            *units = classes;
        }
    }
    let mut model = CnnModel::new(first.shape, &specs)?;
    model.init_he(cfg.seed);
    train(&model, data, val, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::Shape;

    fn separable_set() -> (CnnModel, LabeledSet) {
        let specs = [
            LayerSpec::Conv {
                filters: 2,
                kernel: 3,
                pad: 1,
                stride: 1,
            },
            LayerSpec::Relu,
            LayerSpec::FullyConnected { units: 2 },
            LayerSpec::Softmax,
        ];
        let shape = Shape::new(1, 4, 4);
        let mut model = CnnModel::new(shape, &specs).unwrap();
        model.init_he(1);
        let mut set = LabeledSet::default();
        for i in 0..10 {
            let label = i % 2;
            let level = if label == 1 { 0.8 + 0.01 * i as f64 } else { 0.1 + 0.01 * i as f64 };
            set.push(Tensor::new(shape, vec![level; 16]).unwrap(), label);
        }
        (model, set)
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (model, set) = separable_set();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            minibatch: 4,
            ..TrainConfig::default()
        };
        let (trained, _) = train(&model, &set, &LabeledSet::default(), &cfg).unwrap();
        assert_eq!(trained, model);
    }

    #[test]
    fn loss_decreases_on_separable_data() {
        let (model, set) = separable_set();
        let cfg = TrainConfig {
            learning_rate: 0.05,
            epochs: 5,
            ..TrainConfig::default()
        };
        let (_, log) = train(&model, &set, &set, &cfg).unwrap();
        for w in log.epochs.windows(2) {
            assert!(w[1].train_loss < w[0].train_loss, "{log}");
        }
        assert!(log.to_string().starts_with("epoch 1 train_loss "));
    }

    #[test]
    fn training_is_deterministic() {
        let (model, set) = separable_set();
        let cfg = TrainConfig {
            learning_rate: 0.05,
            minibatch: 3,
            epochs: 4,
            seed: 17,
            ..TrainConfig::default()
        };
        let a = train(&model, &set, &LabeledSet::default(), &cfg).unwrap().0;
        let b = train(&model, &set, &LabeledSet::default(), &cfg).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_reported() {
        let (model, set) = separable_set();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            epochs: 5,
            minibatch: 2,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&model, &set, &LabeledSet::default(), &cfg), Err(Error::Diverged { .. })));
    }
}
