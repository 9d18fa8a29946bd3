//! Minibatch AdaDelta training.
//!
//! Each minibatch is cut into fixed chunks of [`CHUNK`] examples. Every chunk
//! accumulates into its own gradient buffer and the buffers are summed in
//! chunk order, so the result does not depend on how many threads ran.

use propnli_autodiff::{AdaDelta, Gradients, Graph};
use propnli_core::Example;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::Model;
use crate::ModelError;

/// Examples per gradient buffer.
pub const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// L2 strength; the penalty is `λ/2 · Σ w²`, added once per minibatch.
    pub lambda: f64,
    /// Seed for the per-epoch shuffles.
    pub seed: u64,
    pub rho: f64,
    pub eps: f64,
    pub shuffle: bool,
    /// Worker threads for gradient computation; results do not depend on it.
    pub threads: usize,
    /// Keep the parameters of the epoch with the best validation accuracy
    /// instead of the final ones. Needs a validation set.
    pub best_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let AdaDelta { rho, eps } = AdaDelta::default();
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            lambda: 1e-4,
            seed: 42,
            rho,
            eps,
            shuffle: true,
            threads: 1,
            best_epoch: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be a finite non-negative number");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) || !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad("AdaDelta needs 0 < rho < 1 and eps > 0");
        }
        if self.threads == 0 {
            return bad("threads must be at least 1");
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdaDelta {
        AdaDelta { rho: self.rho, eps: self.eps }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    /// Objective (mean NLL + L2) of the very first minibatch, before any update.
    pub first_batch_loss: f64,
    /// Per epoch, the example-weighted mean of the minibatch objectives.
    pub epoch_losses: Vec<f64>,
    /// Per epoch validation accuracy, when a validation set was given.
    pub validation_accuracy: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub selected_epoch: usize,
}

pub(crate) fn thread_pool(threads: usize) -> Result<rayon::ThreadPool, ModelError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ModelError::InvalidConfig(format!("thread pool: {e}")))
}

/// Trains `model` in place and returns the loss history.
pub fn train(model: &mut Model, data: &[Example], config: &TrainConfig) -> Result<History, ModelError> {
    train_with_validation(model, data, None, config)
}

pub fn train_with_validation(
    model: &mut Model,
    data: &[Example],
    validation: Option<&[Example]>,
    config: &TrainConfig,
) -> Result<History, ModelError> {
    config.validate()?;
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if config.best_epoch && validation.is_none_or(|v| v.is_empty()) {
        return Err(ModelError::InvalidConfig("best-epoch selection needs a non-empty validation set".into()));
    }
    model.store.optimizer = config.optimizer();
    let pool = thread_pool(config.threads)?;
    let chunks_per_batch = config.batch_size.div_ceil(CHUNK);
    let mut buffers: Vec<Gradients> = (0..chunks_per_batch).map(|_| Gradients::zeros_like(&model.store)).collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut history = History { selected_epoch: config.epochs, ..Default::default() };
    let mut best: Option<(f64, Model)> = None;

    for epoch in 1..=config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut weighted = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let n_chunks = batch.len().div_ceil(CHUNK);
            let scale = 1.0 / batch.len() as f64;
            let m: &Model = model;
            let losses: Vec<Result<f64, ModelError>> = pool.install(|| {
                buffers[..n_chunks]
                    .par_iter_mut()
                    .zip(batch.par_chunks(CHUNK))
                    .map(|(grads, idx)| {
                        grads.zero();
                        let mut sum = 0.0;
                        for &i in idx {
                            let mut g = Graph::new(&m.store);
                            let loss = m.example_loss(&mut g, &data[i])?;
                            sum += g.scalar(loss);
                            g.backward(loss, scale, grads)?;
                        }
                        Ok(sum)
                    })
                    .collect()
            });
            let mut nll = 0.0;
            for l in losses {
                nll += l?;
            }
            let (first, rest) = buffers[..n_chunks].split_first_mut().expect("at least one chunk");
            for other in rest.iter() {
                first.add_assign(other);
            }
            first.add_l2(&model.store, config.lambda);
            let objective = nll * scale + model.store.l2_penalty(config.lambda);
            if !objective.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, batch: b + 1 });
            }
            if epoch == 1 && b == 0 {
                history.first_batch_loss = objective;
            }
            weighted += objective * batch.len() as f64;
            model.store.adadelta_step(first)?;
            if let Some(name) = model.store.first_non_finite() {
                return Err(ModelError::NonFiniteParameter { epoch, batch: b + 1, name: name.to_owned() });
            }
        }
        history.epoch_losses.push(weighted / data.len() as f64);
        if let Some(val) = validation {
            let acc = crate::eval::accuracy(model, val, &pool)?;
            history.validation_accuracy.push(acc);
            if config.best_epoch && best.as_ref().is_none_or(|(a, _)| acc > *a) {
                best = Some((acc, model.clone()));
                history.selected_epoch = epoch;
            }
        }
    }
    if let Some((_, kept)) = best {
        *model = kept;
    }
    Ok(history)
}
