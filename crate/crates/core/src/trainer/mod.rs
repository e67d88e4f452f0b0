//! Optimisation loop, pre-training with early stopping, and staged
//! fine-tuning with frozen parameter groups.

mod data;
mod finetune;
mod optim;

use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use data::SequenceSet;
pub use finetune::{finetune_pipeline, StageConfig, StageResult};
pub use optim::{Adam, BETA1, BETA2, EPSILON};

use crate::error::{Error, Result};
use crate::model::{backward, forward, loss, ModelParams, ParameterGroup, ParameterMask};
use crate::rng::sub_rng;

/// Pre-training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_steps: usize,
    pub batch_size: usize,
    /// Context window; `None` trains on whole sequences.
    pub seq_len: Option<usize>,
    pub eval_every: usize,
    /// Stop once the held-out loss has not improved by `min_improvement`
    /// for this many steps. Zero disables early stopping.
    pub patience: usize,
    pub min_improvement: f64,
    pub holdout_fraction: f64,
    /// Upper bound on held-out sequences scored per evaluation.
    pub max_eval_sequences: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            max_steps: 100_000,
            batch_size: 8,
            seq_len: None,
            eval_every: 250,
            patience: 2000,
            min_improvement: 1e-3,
            holdout_fraction: 0.01,
            max_eval_sequences: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub nats: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Training loss of every step, in nats per token.
    pub loss_curve: Vec<LossPoint>,
    /// Held-out loss at every evaluation.
    pub eval_curve: Vec<LossPoint>,
    pub final_eval_nll: f64,
    pub steps: usize,
    pub tokens_consumed: u64,
    pub wall_time_secs: f64,
    pub stopped_early: bool,
}

/// Loop settings shared by pre-training and fine-tuning stages.
#[derive(Debug, Clone)]
pub(crate) struct Schedule {
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub width: usize,
    pub eval_every: usize,
    pub patience: usize,
    pub min_improvement: f64,
    pub max_eval_sequences: usize,
}

/// Mean next-token NLL in nats over the first `max_sequences` sequences.
pub fn evaluate(params: &ModelParams, set: &SequenceSet, window: Option<usize>, max_sequences: usize) -> Result<f64> {
    if set.vocab_size != params.config.vocab_size {
        return Err(Error::config(format!(
            "evaluation vocabulary {} != model vocabulary {}",
            set.vocab_size, params.config.vocab_size
        )));
    }
    let width = set.predictions_per_sequence(window);
    let n = set.n_sequences().min(max_sequences.max(1));
    const CHUNK: usize = 16;
    let mut total = 0.0;
    let mut count = 0usize;
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let mut inputs = Vec::with_capacity((end - start) * width);
        let mut targets = Vec::with_capacity((end - start) * width);
        for i in start..end {
            let s = set.sequence(i);
            inputs.extend_from_slice(&s[..width]);
            targets.extend_from_slice(&s[1..=width]);
        }
        let rows = end - start;
        let l = loss(&forward(params, &inputs, rows)?, &targets)?;
        total += l * (rows * width) as f64;
        count += rows * width;
    }
    Ok(total / count as f64)
}

/// Runs the optimisation loop in place. On a non-finite loss or gradient the
/// parameters are left at their last finite state and a numerical error is
/// returned.
pub(crate) fn run_loop(
    params: &mut ModelParams,
    train: &SequenceSet,
    eval: &SequenceSet,
    mask: &ParameterMask,
    schedule: &Schedule,
    rng: &mut ChaCha8Rng,
) -> Result<TrainReport> {
    let started = Instant::now();
    let mut opt = Adam::new(params, mask, schedule.learning_rate)?;
    let mut report = TrainReport {
        loss_curve: Vec::with_capacity(schedule.steps),
        eval_curve: Vec::new(),
        final_eval_nll: f64::NAN,
        steps: 0,
        tokens_consumed: 0,
        wall_time_secs: 0.0,
        stopped_early: false,
    };
    let eval_window = Some(schedule.width);
    let mut best = f64::INFINITY;
    let mut best_step = 0;
    for step in 1..=schedule.steps {
        let (x, y) = train.sample_batch(rng, schedule.batch_size, schedule.width);
        let (l, grads) = backward(params, &x, &y, schedule.batch_size, Some(mask))
            .map_err(|e| Error::Numerical(format!("step {step}: {e}")))?;
        let norm = grads.global_norm();
        if !norm.is_finite() {
            return Err(Error::Numerical(format!("step {step}: non-finite gradient norm")));
        }
        opt.step(params, &grads);
        report.loss_curve.push(LossPoint { step, nats: l });
        report.steps = step;
        report.tokens_consumed += (schedule.batch_size * schedule.width) as u64;

        let check = schedule.eval_every > 0 && step % schedule.eval_every == 0;
        if check && schedule.patience > 0 {
            let e = evaluate(params, eval, eval_window, schedule.max_eval_sequences)?;
            report.eval_curve.push(LossPoint { step, nats: e });
            if e < best - schedule.min_improvement {
                best = e;
                best_step = step;
            } else if step - best_step >= schedule.patience {
                report.stopped_early = true;
                break;
            }
        }
    }
    report.final_eval_nll = evaluate(params, eval, eval_window, schedule.max_eval_sequences)?;
    if report.eval_curve.last().map(|p| p.step) != Some(report.steps) {
        report.eval_curve.push(LossPoint {
            step: report.steps,
            nats: report.final_eval_nll,
        });
    }
    report.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(report)
}

pub(crate) fn window_width(set: &SequenceSet, window: Option<usize>, max_seq_len: usize) -> Result<usize> {
    let width = set.predictions_per_sequence(window);
    if width == 0 || width > max_seq_len {
        return Err(Error::config(format!(
            "context of {width} tokens does not fit the model's {max_seq_len} positions"
        )));
    }
    Ok(width)
}

/// Trains every parameter on `corpus` until `max_steps` or until the
/// held-out loss stagnates.
pub fn pretrain(params: &mut ModelParams, corpus: &SequenceSet, config: &TrainConfig) -> Result<TrainReport> {
    if corpus.vocab_size != params.config.vocab_size {
        return Err(Error::config(format!(
            "corpus vocabulary {} != model vocabulary {}",
            corpus.vocab_size, params.config.vocab_size
        )));
    }
    if config.max_steps == 0 || config.batch_size == 0 {
        return Err(Error::config("max_steps and batch_size must be positive"));
    }
    let (train, eval) = corpus.split_holdout(config.holdout_fraction)?;
    let schedule = Schedule {
        learning_rate: config.learning_rate,
        steps: config.max_steps,
        batch_size: config.batch_size,
        width: window_width(corpus, config.seq_len, params.config.max_seq_len)?,
        eval_every: config.eval_every,
        patience: config.patience,
        min_improvement: config.min_improvement,
        max_eval_sequences: config.max_eval_sequences,
    };
    let mask = ParameterGroup::Full.mask(&params.config);
    let mut rng = sub_rng(config.seed, "pretrain");
    run_loop(params, &train, &eval, &mask, &schedule, &mut rng)
}
