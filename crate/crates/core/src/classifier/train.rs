use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mlp::{argmax_masked, masked_softmax, Gradients, MlpModel};
use crate::error::{Error, Result};

/// One assembled query with its true class (`k` = New Vessel).
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Vec<f32>,
    pub mask: Vec<bool>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    /// Fractions of training at which the learning rate is multiplied by `decay_factor`.
    pub decay_at: Vec<f32>,
    pub decay_factor: f32,
    pub label_smoothing: f32,
    pub clip_norm: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub adam_eps: f32,
    pub seed: u64,
    /// Held out from the training examples when no validation set is given.
    pub validation_fraction: f32,
    /// Examples per gradient work unit; fixed so results do not depend on thread count.
    pub chunk: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64, 32],
            epochs: 40,
            batch_size: 256,
            learning_rate: 1e-3,
            decay_at: vec![0.6, 0.85],
            decay_factor: 0.1,
            label_smoothing: 0.05,
            clip_norm: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 7,
            validation_fraction: 0.1,
            chunk: 32,
        }
    }
}

impl TrainConfig {
    pub fn full_size_hidden() -> Vec<usize> {
        vec![2000, 2000, 1000]
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::Config("train.label_smoothing must lie in [0, 1)".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("train.clip_norm must be positive".into()));
        }
        if self.batch_size == 0 || self.chunk == 0 || self.epochs == 0 {
            return Err(Error::Config("train sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("train.validation_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    fn learning_rate_at(&self, epoch: usize) -> f32 {
        let progress = epoch as f32 / self.epochs as f32;
        let drops = self.decay_at.iter().filter(|d| progress >= **d).count();
        self.learning_rate * self.decay_factor.powi(drops as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f32,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub valid_loss: f64,
    pub valid_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub n_train: usize,
    pub n_valid: usize,
}

/// Label-smoothed target: `1 - eps` on the label plus `eps` spread uniformly
/// over the unmasked classes.
pub fn smoothed_targets(label: usize, mask: &[bool], eps: f32) -> Vec<f32> {
    let n_valid = mask.iter().filter(|m| **m).count().max(1) as f32;
    let mut t: Vec<f32> = mask.iter().map(|m| if *m { eps / n_valid } else { 0.0 }).collect();
    t[label] += 1.0 - eps;
    t
}

/// Cross-entropy of one example against smoothed targets; also returns dL/dlogits.
pub(crate) fn example_loss(logits: &[f32], mask: &[bool], label: usize, eps: f32) -> (f64, Vec<f32>) {
    let p = masked_softmax(logits, mask, 1.0);
    let t = smoothed_targets(label, mask, eps);
    let mut loss = 0.0f64;
    for ((pi, ti), m) in p.iter().zip(&t).zip(mask) {
        if *m && *ti > 0.0 {
            loss -= f64::from(*ti) * f64::from(pi.max(1e-30)).ln();
        }
    }
    let grad = p.iter().zip(&t).zip(mask).map(|((pi, ti), m)| if *m { pi - ti } else { 0.0 }).collect();
    (loss, grad)
}

/// Mean loss and gradient over a batch; chunk results are reduced in order.
pub(crate) fn batch_gradient(model: &MlpModel, batch: &[&Example], eps: f32, chunk: usize) -> (f64, usize, Gradients) {
    let parts: Vec<(f64, usize, Gradients)> = batch
        .par_chunks(chunk)
        .map(|part| {
            let mut g = Gradients::zeros_like(model);
            let mut loss = 0.0;
            let mut correct = 0;
            for ex in part {
                let acts = model.forward_trace(&ex.input);
                let logits = acts.last().expect("output layer");
                let (l, dlogits) = example_loss(logits, &ex.mask, ex.label, eps);
                if argmax_masked(logits, &ex.mask) == ex.label {
                    correct += 1;
                }
                loss += l;
                model.backward(&acts, &dlogits, &mut g);
            }
            (loss, correct, g)
        })
        .collect();
    let mut total = Gradients::zeros_like(model);
    let mut loss = 0.0;
    let mut correct = 0;
    for (l, c, g) in &parts {
        loss += l;
        correct += c;
        total.add(g);
    }
    let n = batch.len().max(1) as f32;
    total.scale(1.0 / n);
    (loss / f64::from(n), correct, total)
}

/// Mean label-smoothed cross-entropy over `examples` and its gradient with
/// respect to every parameter.
pub fn loss_and_gradient(model: &MlpModel, examples: &[Example], label_smoothing: f32) -> (f64, Gradients) {
    let refs: Vec<&Example> = examples.iter().collect();
    let (loss, _, grads) = batch_gradient(model, &refs, label_smoothing, 32);
    (loss, grads)
}

/// Mean unsmoothed NLL and accuracy at temperature 1.
pub(crate) fn evaluate(model: &MlpModel, set: &[Example]) -> (f64, f64) {
    if set.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let (loss, correct) = set
        .par_iter()
        .map(|ex| {
            let logits = model.forward(&ex.input).expect("width checked before training");
            let p = masked_softmax(&logits, &ex.mask, 1.0);
            let hit = usize::from(argmax_masked(&logits, &ex.mask) == ex.label);
            (-f64::from(p[ex.label].max(1e-30)).ln(), hit)
        })
        .reduce(|| (0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    (loss / set.len() as f64, correct as f64 / set.len() as f64)
}

struct Adam {
    m: Vec<f32>,
    v: Vec<f32>,
    step: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    fn update(&mut self, model: &mut MlpModel, grads: &Gradients, lr: f32, cfg: &TrainConfig) {
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step);
        let bc2 = 1.0 - cfg.beta2.powi(self.step);
        let flat = grads.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias));
        for (((p, g), m), v) in model.params_mut().zip(flat).zip(&mut self.m).zip(&mut self.v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
}

/// Seeded shuffle of `0..n` split into (train, held-out) index lists.
fn holdout_split(n: usize, fraction: f32, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_valid = (n as f32 * fraction) as usize;
    let n_valid = if n_valid >= n { 0 } else { n_valid };
    let va = order.split_off(n - n_valid);
    (order, va)
}

/// The examples `train` holds out for validation when given none.
pub fn held_out(examples: &[Example], cfg: &TrainConfig) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (_, va) = holdout_split(examples.len(), cfg.validation_fraction, &mut rng);
    va.iter().map(|i| examples[*i].clone()).collect()
}

/// Trains a classifier and returns the weights with the best validation loss.
///
/// Without a validation set, the last `validation_fraction` of a seeded
/// shuffle of `examples` is held out (nothing is held out when that leaves
/// no examples, and the final epoch is returned).
pub fn train(
    examples: &[Example],
    validation: Option<&[Example]>,
    cfg: &TrainConfig,
    fingerprint: u64,
) -> Result<(MlpModel, TrainReport)> {
    cfg.validate()?;
    let first = examples.first().ok_or_else(|| Error::Config("training set is empty".into()))?;
    let n_out = first.mask.len();
    let width = first.input.len();
    for ex in examples.iter().chain(validation.into_iter().flatten()) {
        if ex.input.len() != width || ex.mask.len() != n_out || ex.label >= n_out || !ex.mask[ex.label] {
            return Err(Error::Config("inconsistent training example".into()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let held: Vec<Example>;
    let (train_set, valid_set): (Vec<&Example>, &[Example]) = match validation {
        Some(v) => (examples.iter().collect(), v),
        None => {
            let (tr, va) = holdout_split(examples.len(), cfg.validation_fraction, &mut rng);
            held = va.iter().map(|i| examples[*i].clone()).collect();
            (tr.iter().map(|i| &examples[*i]).collect(), &held)
        }
    };

    let mut widths = vec![width];
    widths.extend(&cfg.hidden);
    widths.push(n_out);
    let mut model = MlpModel::new(&widths, cfg.seed);
    model.fingerprint = fingerprint;
    let mut adam = Adam::new(model.n_params());

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(f64, MlpModel, usize)> = None;
    let mut stats = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch_idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = batch_idx.iter().map(|i| train_set[*i]).collect();
            let (loss, c, mut grads) = batch_gradient(&model, &batch, cfg.label_smoothing, cfg.chunk);
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("non-finite loss at epoch {epoch}")));
            }
            let norm = grads.l2_norm();
            if !norm.is_finite() {
                return Err(Error::Diverged(format!("non-finite gradient at epoch {epoch}")));
            }
            if norm > cfg.clip_norm {
                grads.scale(cfg.clip_norm / norm);
            }
            adam.update(&mut model, &grads, lr, cfg);
            loss_sum += loss * batch.len() as f64;
            correct += c;
        }
        let n = train_set.len() as f64;
        let (valid_loss, valid_accuracy) = evaluate(&model, valid_set);
        stats.push(EpochStats {
            epoch,
            learning_rate: lr,
            train_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
            valid_loss,
            valid_accuracy,
        });
        if !valid_set.is_empty() && best.as_ref().is_none_or(|(l, _, _)| valid_loss < *l) {
            best = Some((valid_loss, model.clone(), epoch));
        }
    }
    let (model, best_epoch) = match best {
        Some((_, m, e)) => (m, e),
        None => (model, cfg.epochs - 1),
    };
    Ok((model, TrainReport { epochs: stats, best_epoch, n_train: train_set.len(), n_valid: valid_set.len() }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothed_targets_sum_to_one() {
        let mask = [true, false, true, true, true];
        for label in [0, 2, 4] {
            let t = smoothed_targets(label, &mask, 0.05);
            assert!((t.iter().sum::<f32>() - 1.0).abs() < 1e-6);
            assert_eq!(t[1], 0.0);
            assert!((t[label] - (0.95 + 0.05 / 4.0)).abs() < 1e-7);
        }
    }

    #[test]
    fn learning_rate_schedule() {
        let cfg = TrainConfig { epochs: 100, ..TrainConfig::default() };
        assert_eq!(cfg.learning_rate_at(0), 1e-3);
        assert_eq!(cfg.learning_rate_at(59), 1e-3);
        assert!((cfg.learning_rate_at(60) - 1e-4).abs() < 1e-10);
        assert!((cfg.learning_rate_at(90) - 1e-5).abs() < 1e-11);
    }

    #[test]
    fn rejects_bad_examples() {
        let ex = Example { input: vec![0.0; 3], mask: vec![true, false], label: 1 };
        assert!(train(&[ex], None, &TrainConfig::default(), 0).is_err());
        assert!(train(&[], None, &TrainConfig::default(), 0).is_err());
    }
}
