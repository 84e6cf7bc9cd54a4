//! Objectives, RMSprop, node-dropout scheduling and early stopping.

mod early_stop;
mod loss;
mod optim;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use early_stop::{should_stop, Decision, EarlyStopping, DEFAULT_PATIENCE};
pub use loss::{
    batch_loss, ranking_loss, rating_loss, sample_loss, softplus, AggregationRecord, BatchOutput,
    Task,
};
pub use optim::{RmsProp, DEFAULT_EPSILON, DEFAULT_RHO};

use crate::data::{DatasetBundle, RatingRecord};
use crate::error::{Error, Result};
use crate::eval;
use crate::graph::{DecentralizedGraph, NeighborSampler};
use crate::model::{ranking_score, Forward, ModelParams, Predictor, VariantFlags};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Embedding size `D`.
    pub dim: usize,
    /// Node-dropout cap `K`.
    pub neighbor_cap: usize,
    /// Agreement threshold for relationship coefficients.
    pub delta: u8,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub task: Task,
    /// Ratings at or above this count as positives (`F`).
    pub threshold: u8,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub rho: f64,
    pub epsilon: f64,
    /// Keep per-aggregation neighbor counts in each [`EpochReport`].
    pub instrument: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 64,
            neighbor_cap: 10,
            delta: crate::graph::DEFAULT_DELTA,
            learning_rate: 5e-4,
            batch_size: 128,
            task: Task::Rating,
            threshold: 4,
            patience: DEFAULT_PATIENCE,
            max_epochs: 100,
            seed: 42,
            rho: DEFAULT_RHO,
            epsilon: DEFAULT_EPSILON,
            instrument: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.dim == 0 {
            return fail("dim must be positive".into());
        }
        if self.neighbor_cap == 0 {
            return fail("neighbor_cap must be at least 1".into());
        }
        if self.delta > 4 {
            return fail(format!("delta must be in 0..=4, got {}", self.delta));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return fail(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if !(1..=5).contains(&self.threshold) {
            return fail(format!("threshold must be a rating in 1..=5, got {}", self.threshold));
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be positive".into());
        }
        if !(self.rho > 0.0 && self.rho < 1.0) || !(self.epsilon > 0.0) {
            return fail("rho must lie in (0, 1) and epsilon must be positive".into());
        }
        Ok(())
    }
}

/// One epoch's numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: f64,
    pub val_rmse: f64,
    /// Mean validation loss under the training objective.
    pub val_loss: f64,
    /// Range of validation ranking scores `sigmoid(r̂)`; ranking task only.
    pub val_score_min: f64,
    pub val_score_max: f64,
    #[serde(skip)]
    pub wall_time: f64,
    #[serde(skip)]
    pub aggregations: Vec<AggregationRecord>,
}

impl EpochReport {
    /// The quantity early stopping watches: MAE + RMSE for the rating task,
    /// validation cross-entropy for the ranking task. Falls back to the
    /// train loss without a validation split.
    pub fn monitored(&self, task: Task) -> f64 {
        let v = match task {
            Task::Rating => self.val_mae + self.val_rmse,
            Task::Ranking => self.val_loss,
        };
        if v.is_nan() {
            self.train_loss
        } else {
            v
        }
    }
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (epoch as u64).wrapping_add(1)
}

/// Shuffled train split, node-dropout draw for this epoch, one optimizer step
/// per mini-batch, then validation with full neighborhoods.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch(
    bundle: &DatasetBundle,
    graph: &DecentralizedGraph,
    params: &mut ModelParams,
    optimizer: &mut RmsProp,
    config: &TrainConfig,
    flags: &VariantFlags,
    epoch: usize,
) -> Result<EpochReport> {
    let started = Instant::now();
    let mut order: Vec<usize> = (0..bundle.train.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed(config.seed, epoch)));
    let sampler = NeighborSampler::for_epoch(config.seed, epoch as u64, config.neighbor_cap);

    let mut total = 0.0;
    let mut aggregations = Vec::new();
    for chunk in order.chunks(config.batch_size) {
        let batch: Vec<RatingRecord> = chunk.iter().map(|&i| bundle.train[i]).collect();
        let out = {
            let fwd = Forward {
                params,
                graph,
                bundle,
                flags,
                sampler,
            };
            batch_loss(&fwd, &batch, config.task, config.threshold)?
        };
        total += out.loss * batch.len() as f64;
        if config.instrument {
            aggregations.extend(out.aggregations);
        }
        optimizer.step(params, &out.grads, config.learning_rate)?;
    }
    optimizer.sync();
    if let Some(name) = params.first_non_finite() {
        return Err(Error::NonFinite(format!("parameter group {name}")));
    }

    let val = validation_metrics(bundle, graph, params, config, flags)?;
    Ok(EpochReport {
        epoch,
        train_loss: total / bundle.train.len() as f64,
        val_mae: val.mae,
        val_rmse: val.rmse,
        val_loss: val.loss,
        val_score_min: val.score_range.0,
        val_score_max: val.score_range.1,
        wall_time: started.elapsed().as_secs_f64(),
        aggregations,
    })
}

struct Validation {
    mae: f64,
    rmse: f64,
    loss: f64,
    score_range: (f64, f64),
}

fn validation_metrics(
    bundle: &DatasetBundle,
    graph: &DecentralizedGraph,
    params: &ModelParams,
    config: &TrainConfig,
    flags: &VariantFlags,
) -> Result<Validation> {
    let val = &bundle.validation;
    if val.is_empty() {
        return Ok(Validation {
            mae: f64::NAN,
            rmse: f64::NAN,
            loss: f64::NAN,
            score_range: (f64::NAN, f64::NAN),
        });
    }
    let predictor = Predictor::for_pairs(params, graph, bundle, flags, val.iter().map(|r| (r.user, r.item)));
    let preds: Vec<f64> = val.iter().map(|r| predictor.predict(r.user, r.item)).collect();
    let truths: Vec<f64> = val.iter().map(|r| r.rating as f64).collect();
    let (mae, rmse) = eval::mae_rmse(&preds, &truths)?;
    let loss = preds
        .iter()
        .zip(val)
        .map(|(&p, r)| sample_loss(config.task, p, r.rating, config.threshold).0)
        .sum::<f64>()
        / val.len() as f64;
    let score_range = match config.task {
        Task::Rating => (f64::NAN, f64::NAN),
        Task::Ranking => preds
            .iter()
            .map(|&p| ranking_score(p))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s), hi.max(s))),
    };
    Ok(Validation {
        mae,
        rmse,
        loss,
        score_range,
    })
}

/// Result of a full training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best monitored value.
    pub params: ModelParams,
    pub optimizer: RmsProp,
    pub history: Vec<EpochReport>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Trains from a fresh initialization until early stopping or `max_epochs`.
pub fn fit(
    bundle: &DatasetBundle,
    graph: &DecentralizedGraph,
    config: &TrainConfig,
    flags: &VariantFlags,
) -> Result<TrainOutcome> {
    fit_with(bundle, graph, config, flags, |_| {})
}

pub fn fit_with(
    bundle: &DatasetBundle,
    graph: &DecentralizedGraph,
    config: &TrainConfig,
    flags: &VariantFlags,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<TrainOutcome> {
    config.validate()?;
    flags.validate()?;
    if graph.num_users() != bundle.num_users() || graph.num_items() != bundle.num_items() {
        return Err(Error::Validation("graph does not match dataset".into()));
    }
    let mut params = ModelParams::init(bundle.num_users(), bundle.num_items(), config.dim, config.seed);
    let mut optimizer = RmsProp::with_constants(&params, config.rho, config.epsilon);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = (params.clone(), optimizer.clone());
    let mut history = Vec::new();
    let mut stopped_early = false;
    for epoch in 0..config.max_epochs {
        let report = train_epoch(bundle, graph, &mut params, &mut optimizer, config, flags, epoch)?;
        log::info!(
            "epoch {:>3}  train_loss {:.5}  val_mae {:.4}  val_rmse {:.4}",
            epoch,
            report.train_loss,
            report.val_mae,
            report.val_rmse
        );
        on_epoch(&report);
        let decision = stopper.observe(report.monitored(config.task));
        history.push(report);
        match decision {
            Decision::Continue { improved: true } => best = (params.clone(), optimizer.clone()),
            Decision::Continue { improved: false } => {}
            Decision::Stop { best_epoch } => {
                log::info!("early stop after epoch {epoch}; restoring epoch {best_epoch}");
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        params: best.0,
        optimizer: best.1,
        history,
        best_epoch: stopper.best_epoch().unwrap_or(0),
        stopped_early,
    })
}
