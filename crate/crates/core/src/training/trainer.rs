use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{adamw_step, lr_at, AdamWState, TrainConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{forward, loss_and_gradient, BiIceConfig, BiIceParams, Sample};
use crate::numerics::{Mat, Real, RngState};

const INIT_STREAM: u64 = 1;
const HOLDOUT_STREAM: u64 = 2;
const EPOCH_STREAM_BASE: u64 = 1 << 32;

/// Summary of one training epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub iterations: usize,
    /// Learning rate of the last step.
    pub lr: f64,
    /// Mean total loss over the epoch's samples.
    pub loss: f64,
    pub cls_loss: f64,
    pub expl_loss: Option<f64>,
    pub sparse_loss: f64,
    /// Fraction of samples classified correctly when their batch was visited.
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

/// Concept bank and metrics after an epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EpochSnapshot<T = f64> {
    pub epoch: usize,
    pub zeta: Mat<T>,
    pub metrics: EpochMetrics,
}

pub fn iterations_per_epoch(samples: usize, batch_size: usize) -> usize {
    samples.div_ceil(batch_size)
}

/// One pass over `data` in a seeded random order.
///
/// The learning rate of each step comes from the warmup-cosine schedule at
/// the optimizer's global step, over a horizon of `cfg.epochs` epochs.
pub fn train_epoch<T: Real>(
    data: &Dataset<T>,
    params: &mut BiIceParams<T>,
    opt: &mut AdamWState<T>,
    model: &BiIceConfig,
    cfg: &TrainConfig,
    rng: &mut RngState,
) -> Result<EpochMetrics> {
    if data.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    let per_epoch = iterations_per_epoch(data.len(), cfg.batch_size);
    let total = cfg.epochs * per_epoch;
    let weights = cfg.weights();
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);

    let (mut loss, mut cls, mut expl, mut sparse) = (0.0, 0.0, 0.0, 0.0);
    let mut correct = 0;
    let mut lr = 0.0;
    for chunk in order.chunks(cfg.batch_size) {
        let batch: Vec<Sample<'_, T>> = chunk.iter().map(|&i| data.sample(i)).collect();
        let (stats, grads) = loss_and_gradient(params, model, &batch, &weights)?;
        if !stats.total.is_finite() {
            return Err(Error::Training {
                iteration: opt.step,
                message: format!("non-finite loss {}", stats.total),
                norms: params.norm_summary(),
            });
        }
        lr = lr_at(opt.step, total, cfg.warmup_iters, cfg.base_lr)?;
        adamw_step(params, &grads, opt, lr, cfg.weight_decay)?;
        let n = stats.count as f64;
        loss += stats.total * n;
        cls += stats.cls * n;
        expl += stats.expl.unwrap_or(0.0) * n;
        sparse += stats.sparse * n;
        correct += stats.correct;
    }
    if !params.all_finite() {
        return Err(Error::Training {
            iteration: opt.step,
            message: "non-finite parameters after update".into(),
            norms: params.norm_summary(),
        });
    }
    let n = data.len() as f64;
    Ok(EpochMetrics {
        epoch: opt.step / per_epoch,
        iterations: opt.step,
        lr,
        loss: loss / n,
        cls_loss: cls / n,
        expl_loss: (weights.lambda_expl > 0.0).then_some(expl / n),
        sparse_loss: sparse / n,
        train_accuracy: correct as f64 / n,
        val_accuracy: None,
    })
}

/// Fraction of `data` whose largest logit is the true class.
pub fn accuracy<T: Real>(params: &BiIceParams<T>, model: &BiIceConfig, data: &Dataset<T>) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Contract("accuracy of an empty dataset".into()));
    }
    let mut correct = 0;
    for (z, &y) in data.samples.iter().zip(&data.labels) {
        correct += (forward(z, params, model)?.predicted_class() == y) as usize;
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Resumable training state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Checkpoint<T = f64> {
    pub model: BiIceConfig,
    pub train: TrainConfig,
    pub params: BiIceParams<T>,
    pub optimizer: AdamWState<T>,
    pub epochs_done: usize,
}

/// Drives epochs over a fixed training set.
pub struct Trainer<T: Real = f64> {
    state: Checkpoint<T>,
}

impl<T: Real> Trainer<T> {
    /// Fresh parameters drawn from the configured seed.
    pub fn new(model: BiIceConfig, train: TrainConfig) -> Result<Self> {
        model.validate()?;
        train.validate()?;
        let params = BiIceParams::init(&model, &mut RngState::new(train.seed).split(INIT_STREAM))?;
        let optimizer = AdamWState::new(&model);
        Ok(Trainer {
            state: Checkpoint {
                model,
                train,
                params,
                optimizer,
                epochs_done: 0,
            },
        })
    }

    pub fn resume(checkpoint: Checkpoint<T>) -> Result<Self> {
        checkpoint.params.check(&checkpoint.model)?;
        checkpoint.train.validate()?;
        Ok(Trainer { state: checkpoint })
    }

    pub fn params(&self) -> &BiIceParams<T> {
        &self.state.params
    }

    pub fn checkpoint(&self) -> &Checkpoint<T> {
        &self.state
    }

    pub fn into_checkpoint(self) -> Checkpoint<T> {
        self.state
    }

    /// Runs the next epoch; its shuffle order depends only on the seed and
    /// the epoch index.
    pub fn run_epoch(&mut self, data: &Dataset<T>) -> Result<EpochMetrics> {
        let s = &mut self.state;
        let mut rng = RngState::new(s.train.seed).split(EPOCH_STREAM_BASE + s.epochs_done as u64);
        let mut m = train_epoch(data, &mut s.params, &mut s.optimizer, &s.model, &s.train, &mut rng)?;
        s.epochs_done += 1;
        m.epoch = s.epochs_done;
        Ok(m)
    }
}

/// Final parameters and the per-epoch record of a training run.
#[derive(Clone, Debug)]
pub struct FitOutput<T: Real = f64> {
    pub params: BiIceParams<T>,
    pub snapshots: Vec<EpochSnapshot<T>>,
    pub history: Vec<EpochMetrics>,
    pub optimizer: AdamWState<T>,
}

/// Splits off a seeded 10% validation holdout. Both parts keep the original
/// sample order.
pub fn holdout_split<T: Real>(data: &Dataset<T>, seed: u64) -> (Dataset<T>, Dataset<T>) {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut RngState::new(seed).split(HOLDOUT_STREAM));
    let n_val = data.len() / 10;
    let mut val: Vec<usize> = order[..n_val].to_vec();
    let mut train: Vec<usize> = order[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (data.subset(&train), data.subset(&val))
}

/// Trains from fresh parameters for `cfg.epochs` epochs.
///
/// Without an explicit validation set a 10% holdout of `data` is used and the
/// remaining samples are trained on. `observer` sees every epoch's metrics.
pub fn fit<T: Real>(
    model: &BiIceConfig,
    data: &Dataset<T>,
    val: Option<&Dataset<T>>,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochMetrics),
) -> Result<FitOutput<T>> {
    cfg.validate()?;
    model.validate()?;
    if cfg.lambda_expl > 0.0 && data.annotations.is_none() {
        return Err(Error::Config(
            "lambda_expl > 0 requires annotations; provide them or set lambda_expl = 0".into(),
        ));
    }
    let split;
    let (train, val) = match val {
        Some(v) => (data, Some(v)),
        None => {
            split = holdout_split(data, cfg.seed);
            (&split.0, (!split.1.is_empty()).then_some(&split.1))
        }
    };
    if train.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    let total = cfg.epochs * iterations_per_epoch(train.len(), cfg.batch_size);
    lr_at(0, total, cfg.warmup_iters, cfg.base_lr)?;

    let mut trainer = Trainer::new(model.clone(), cfg.clone())?;
    let mut snapshots = Vec::new();
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let mut m = trainer.run_epoch(train)?;
        if let Some(v) = val {
            m.val_accuracy = Some(accuracy(trainer.params(), model, v)?);
        }
        observer(&m);
        if m.epoch % cfg.snapshot_every == 0 {
            snapshots.push(EpochSnapshot {
                epoch: m.epoch,
                zeta: trainer.params().bank.zeta.clone(),
                metrics: m.clone(),
            });
        }
        history.push(m);
    }
    let state = trainer.into_checkpoint();
    Ok(FitOutput {
        params: state.params,
        snapshots,
        history,
        optimizer: state.optimizer,
    })
}
