//! Mini-batch training for the sequence models: configuration, the Adam
//! update loop with gradient clipping, per-epoch loss logging, and the
//! text metrics used for evaluation.
//!
//! One epoch shuffles the example order with the run's seeded generator,
//! walks it in batches, and applies one clipped Adam step per batch to the
//! summed batch loss. Dropout masks are drawn per sentence in batch order,
//! sources first, so two runs with the same seed replay the same stream.

pub mod adam;
pub mod metrics;

pub use adam::{adam_step, clip_grad_norm, AdamState};
pub use metrics::{
    corpus_bleu, tokenize, word_fscore_breakdown, FScoreReport, FrequencyBucket, WordScore,
};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mnmt::{Hyper, Model, SentenceDropout, TrainExample};
use crate::numerics::{flatten_gradients, DiffGraph, ParamBlock, Vector};

/// Hyperparameters for one training run. The loss weights (`lambda`,
/// `margin`, `rho`) are carried here so a config file can hand them to
/// `Model::init`; during training the copies on the model are what the
/// loss reads.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: f64,
    /// Probability of zeroing a coordinate; kept units are rescaled so the
    /// expectation is unchanged. Zero disables dropout.
    pub dropout: f64,
    pub lambda: f64,
    pub margin: f64,
    pub rho: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            lr: 4e-4,
            clip_norm: 1.0,
            dropout: 0.3,
            lambda: 0.5,
            margin: 0.1,
            rho: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate {} out of range", self.lr)));
        }
        if !(self.clip_norm.is_finite() && self.clip_norm > 0.0) {
            return Err(Error::Config(format!("clip norm {} out of range", self.clip_norm)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout rate {} must lie in [0, 1)",
                self.dropout
            )));
        }
        self.hyper().validate()
    }

    /// The loss-weight slice of the config, in the form `Model::init` takes.
    pub fn hyper(&self) -> Hyper {
        Hyper {
            lambda: self.lambda,
            margin: self.margin,
            rho: self.rho,
        }
    }
}

/// Dataset-averaged losses for one epoch. `latent` is zero for single-task
/// models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub total: f64,
    pub task: f64,
    pub latent: f64,
}

/// Renders the loss log in the CSV layout the tooling consumes.
pub fn loss_log_csv(log: &[EpochLoss]) -> String {
    let mut out = String::from("epoch,loss_total,loss_task,loss_latent\n");
    for e in log {
        out.push_str(&format!("{},{},{},{}\n", e.epoch, e.total, e.task, e.latent));
    }
    out
}

fn mask_vec(dim: usize, keep: f64, rng: &mut ChaCha8Rng) -> Vector {
    Vector::new(
        (0..dim)
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect(),
    )
}

fn draw_masks(
    model: &Model,
    batch: &[TrainExample],
    dropout: f64,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<SentenceDropout>> {
    if dropout <= 0.0 {
        return None;
    }
    let keep = 1.0 - dropout;
    let emb = model.dims.emb;
    let out_dim = model.output_mask_dim();
    Some(
        batch
            .iter()
            .map(|ex| SentenceDropout {
                source: (0..ex.source.len()).map(|_| mask_vec(emb, keep, rng)).collect(),
                output: (0..ex.target.len() + 1)
                    .map(|_| mask_vec(out_dim, keep, rng))
                    .collect(),
            })
            .collect(),
    )
}

/// Trains the model in place and returns the per-epoch loss log. Each batch
/// takes exactly one clipped Adam step on the summed batch loss; the logged
/// values are per-sentence averages over the dataset.
pub fn train_model(
    model: &mut Model,
    dataset: &[TrainExample],
    config: &TrainConfig,
) -> Result<Vec<EpochLoss>> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }

    let mut adam = AdamState::new(model.coord_count(), config.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut rng);

        let (mut total, mut task, mut latent) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<TrainExample> =
                chunk.iter().map(|&i| dataset[i].clone()).collect();
            let masks = draw_masks(model, &batch, config.dropout, &mut rng);

            let mut g = DiffGraph::new();
            let nodes = model.bind(&mut g);
            let loss = model.build_batch_loss(&mut g, &nodes, &batch, masks.as_deref())?;
            total += g.value_vec(loss.total)?[0];
            task += g.value_vec(loss.task)?[0];
            if let Some(l) = loss.latent {
                latent += g.value_vec(l)?[0];
            }

            let grads = g.backward(loss.total)?;
            let mut flat = flatten_gradients::<Model>(&nodes, &grads);
            clip_grad_norm(&mut flat, config.clip_norm);
            adam_step(&mut adam, model, &flat)?;
        }

        let n = dataset.len() as f64;
        let entry = EpochLoss {
            epoch,
            total: total / n,
            task: task / n,
            latent: latent / n,
        };
        log::info!(
            "epoch {}: loss {:.6} (task {:.6}, latent {:.6})",
            entry.epoch,
            entry.total,
            entry.task,
            entry.latent
        );
        log.push(entry);
    }
    Ok(log)
}
