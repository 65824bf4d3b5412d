//! Mini-batch Adam training.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::config::{AdamConfig, TrainConfig};
use crate::data::{PairedCorpus, TrainInstance};
use crate::encoders::{GradientBundle, ModelParams};
use crate::error::{Error, Result};
use crate::losses::{example_breakdown, example_loss, LossBreakdown, LossExample, TermWeights};
use crate::seed::{self, stream};

/// Examples per gradient work unit. Chunk sums are combined in chunk order,
/// so the result does not depend on the worker count.
const CHUNK: usize = 16;

#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    learning_rate: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, learning_rate: f64, config: AdamConfig) -> Self {
        Adam {
            config,
            learning_rate,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        let AdamConfig { beta1, beta2, epsilon } = self.config;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= self.learning_rate * (*m / c1) / ((*v / c2).sqrt() + epsilon);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Mean per-instance loss of each epoch, accumulated while training.
    pub epoch_losses: Vec<LossBreakdown>,
}

fn check_shape(params: &ModelParams, corpus: &PairedCorpus, config: &TrainConfig) -> Result<()> {
    if params.dim() != corpus.dim() {
        return Err(Error::Dimension {
            expected: corpus.dim(),
            found: params.dim(),
        });
    }
    if params.kind() != config.encoder || params.hidden() != config.hidden || params.max_history() != config.max_history {
        return Err(Error::invalid("params", "initial parameters do not match the training config"));
    }
    Ok(())
}

/// `config.epochs` passes of mini-batch Adam over `instances`, starting from
/// `initial`. The shuffle order of epoch `k` comes from `(seed, k)`.
pub fn train_iteration(
    instances: &[TrainInstance],
    corpus: &PairedCorpus,
    config: &TrainConfig,
    initial: ModelParams,
    seed: u64,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_shape(&initial, corpus, config)?;
    if instances.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let examples = instances
        .iter()
        .map(|inst| LossExample::from_instance(inst, corpus))
        .collect::<Result<Vec<_>>>()?;
    let weights = TermWeights::from(config.coeffs);
    let mut params = initial;
    let mut adam = Adam::new(params.len(), config.learning_rate, config.adam);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.sort_unstable();
        order.shuffle(&mut seed::rng(seed, &[stream::SHUFFLE, epoch as u64]));
        let mut epoch_loss = LossBreakdown::default();
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let partial = batch
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut grad = params.zero_grad();
                    let mut loss = LossBreakdown::default();
                    for &i in chunk {
                        loss.add(&example_loss(&examples[i], &params, weights, config.loss, Some(&mut grad))?);
                    }
                    Ok((loss, grad))
                })
                .collect::<Result<Vec<(LossBreakdown, GradientBundle)>>>()
                .map_err(|e| match e {
                    Error::NonFinite(_) => Error::NonFiniteLoss { epoch, batch: b },
                    other => other,
                })?;
            let mut grad = params.zero_grad();
            let mut loss = LossBreakdown::default();
            for (l, g) in &partial {
                loss.add(l);
                grad.add_assign(g);
            }
            if !loss.total.is_finite() || grad.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            if config.loss.mean_reduction {
                let s = 1.0 / batch.len() as f64;
                grad.values.iter_mut().for_each(|v| *v *= s);
            }
            epoch_loss.add(&loss);
            adam.step(&mut params.values, &grad.values);
        }
        epoch_loss.scale(1.0 / examples.len() as f64);
        epoch_losses.push(epoch_loss);
    }
    Ok(TrainOutcome { params, epoch_losses })
}

/// Every loss term, averaged over `instances`, at fixed parameters.
pub fn mean_breakdown(
    instances: &[TrainInstance],
    corpus: &PairedCorpus,
    params: &ModelParams,
    config: &TrainConfig,
) -> Result<LossBreakdown> {
    if instances.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let weights = TermWeights::from(config.coeffs);
    let per = instances
        .par_iter()
        .map(|inst| example_breakdown(&LossExample::from_instance(inst, corpus)?, params, weights, config.loss))
        .collect::<Result<Vec<_>>>()?;
    let mut total = LossBreakdown::default();
    for b in &per {
        total.add(b);
    }
    total.scale(1.0 / instances.len() as f64);
    Ok(total)
}
