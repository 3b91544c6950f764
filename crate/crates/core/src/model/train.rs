use serde::{Deserialize, Serialize};

use super::network::{batch_gradient, batch_loss, Example, Phase};
use super::params::{ModelConfig, ModelParams};
use crate::corpus::make_batches_for_sources;
use crate::error::{Error, Result};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub phase: Phase,
    /// Per-token QGen NLL over the epoch.
    pub qgen: f64,
    /// Mean guesser cross-entropy over the epoch (0 in QGen-only epochs).
    pub guesser: f64,
    pub grad_norm_max: f64,
    pub validation: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub last: ModelParams,
    /// Parameters at the epoch with the lowest validation loss, when a
    /// validation set was supplied.
    pub best: Option<(usize, ModelParams)>,
    pub log: TrainLog,
}

/// Epochs are numbered from 1; epoch `e` trains the guesser jointly iff
/// `e % modulo_n == 0`.
pub fn phase_for_epoch(epoch: usize, modulo_n: usize) -> Phase {
    if epoch % modulo_n == 0 {
        Phase::Joint
    } else {
        Phase::QgenOnly
    }
}

pub fn train(params: ModelParams, dataset: &[Example], cfg: &ModelConfig, seed: u64) -> Result<(ModelParams, TrainLog)> {
    let out = train_with_validation(params, dataset, None, cfg, seed)?;
    Ok((out.last, out.log))
}

/// Plain SGD with global gradient-norm clipping.
pub fn train_with_validation(
    mut params: ModelParams,
    dataset: &[Example],
    validation: Option<&[Example]>,
    cfg: &ModelConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptySet("training dataset"));
    }
    let sources: Vec<_> = dataset.iter().map(|e| e.source).collect();
    let mut log = TrainLog::default();
    let mut best: Option<(usize, f64, ModelParams)> = None;
    for epoch in 1..=cfg.epochs {
        let phase = phase_for_epoch(epoch, cfg.modulo_n);
        let batches = make_batches_for_sources(&sources, cfg.batch_size, derive_seed(seed, "epoch", epoch as u64));
        let (mut nll, mut tokens, mut ce, mut guessed, mut grad_norm_max) = (0.0, 0usize, 0.0, 0usize, 0.0f64);
        for (b, batch) in batches.iter().enumerate() {
            let members: Vec<&Example> = batch.indices.iter().map(|&i| &dataset[i]).collect();
            let (loss, mut grads) = batch_gradient(&params, &members, phase, cfg.guesser_human_only);
            if !loss.total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            nll += loss.qgen * loss.tokens as f64;
            tokens += loss.tokens;
            if phase == Phase::Joint {
                ce += loss.guesser * members.len() as f64;
                guessed += members.len();
            }
            let norm = grads.norm();
            grad_norm_max = grad_norm_max.max(norm);
            if norm > cfg.grad_clip {
                grads.scale(cfg.grad_clip / norm);
            }
            params.add_scaled(-cfg.learning_rate, &grads);
        }
        let validation_loss = validation.filter(|v| !v.is_empty()).map(|v| {
            let members: Vec<&Example> = v.iter().collect();
            batch_loss(&params, &members, Phase::Joint, cfg.guesser_human_only).total
        });
        if let Some(v) = validation_loss {
            if best.as_ref().is_none_or(|(_, b, _)| v < *b) {
                best = Some((epoch, v, params.clone()));
            }
        }
        log.epochs.push(EpochLog {
            epoch,
            phase,
            qgen: if tokens > 0 { nll / tokens as f64 } else { 0.0 },
            guesser: if guessed > 0 { ce / guessed as f64 } else { 0.0 },
            grad_norm_max,
            validation: validation_loss,
        });
    }
    Ok(TrainOutcome { last: params, best: best.map(|(e, _, p)| (e, p)), log })
}
