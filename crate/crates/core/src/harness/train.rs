use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::optim::{Optimizer, OptimizerConfig};
use super::task::{accuracy, make_task, Loss, SyntheticTask, TaskSpec};
use crate::accounting::{AccountingReport, DEFAULT_REFERENCE_RANK};
use crate::error::{Error, Result};
use crate::layers::{CapaBoostLayer, LayerConfig, Masking};
use crate::linalg::{numerical_rank, Matrix, DEFAULT_RANK_TOL};

fn default_epochs() -> usize {
    500
}
fn default_reference_r() -> usize {
    DEFAULT_REFERENCE_RANK
}

/// One training run: task, layer, optimizer and schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskSpec,
    #[serde(default)]
    pub data_seed: u64,
    pub layer: LayerConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// `None` trains full-batch.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default = "default_reference_r")]
    pub reference_r: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.layer.validate()?;
        self.optimizer.validate()?;
        let dims = self.task.dims();
        if (self.layer.d1, self.layer.d2) != dims {
            return Err(Error::config(format!(
                "layer is {}x{} but the task needs {}x{}",
                self.layer.d1, self.layer.d2, dims.0, dims.1
            )));
        }
        if self.batch_size == Some(0) {
            return Err(Error::config("batch_size must be positive"));
        }
        Ok(())
    }

    /// Compact identifier of the varied settings.
    pub fn key(&self) -> String {
        format!(
            "policy={},d={},r={},density={},seed={}",
            self.layer.policy,
            self.layer.d,
            self.layer.r,
            self.layer.pattern.density(),
            self.data_seed
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// Loss became non-finite during this epoch; curves stop there.
    Diverged { epoch: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub key: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub status: RunStatus,
    /// Evaluation-mode loss on the training split after each epoch.
    pub train_loss: Vec<f64>,
    pub eval_loss: Vec<f64>,
    /// Classification accuracy on the eval split; `None` for regression.
    pub eval_accuracy: Option<f64>,
    /// Rank of the effective weight after training; `None` for adapter-style layers.
    pub final_rank: Option<usize>,
    pub accounting: AccountingReport,
    pub frozen_base_intact: bool,
    pub wall_time_secs: f64,
}

impl ExperimentResult {
    pub fn final_train_loss(&self) -> f64 {
        self.train_loss.last().copied().unwrap_or(f64::NAN)
    }

    pub fn final_eval_loss(&self) -> f64 {
        self.eval_loss.last().copied().unwrap_or(f64::NAN)
    }

    pub fn completed(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

/// Evaluation-mode loss of `layer` on `(x, y)`.
pub fn evaluate(layer: &CapaBoostLayer, loss: Loss, x: &Matrix, y: &Matrix) -> Result<f64> {
    let pred = layer.forward_eval(x)?;
    Ok(loss.evaluate(&pred, y)?.0)
}

/// Trains `layer` in place on `task`; returns per-epoch (train, eval) losses and the status.
///
/// The mask step index advances once per optimizer update. Mini-batches are
/// contiguous slices of the training split in order.
pub fn train_layer(
    layer: &mut CapaBoostLayer,
    task: &SyntheticTask,
    optimizer: &mut Optimizer,
    epochs: usize,
    batch_size: Option<usize>,
) -> Result<(Vec<f64>, Vec<f64>, RunStatus)> {
    let loss = task.loss();
    let n = task.train.x.rows();
    let batch = batch_size.unwrap_or(n).min(n);
    let batches: Vec<(Matrix, Matrix)> = if batch == n {
        vec![(task.train.x.clone(), task.train.y.clone())]
    } else {
        (0..n)
            .step_by(batch)
            .map(|start| {
                let end = (start + batch).min(n);
                Ok((task.train.x.row_slice(start, end)?, task.train.y.row_slice(start, end)?))
            })
            .collect::<Result<_>>()?
    };

    let mut train_curve = Vec::with_capacity(epochs);
    let mut eval_curve = Vec::with_capacity(epochs);
    let mut step = 0u64;
    for epoch in 0..epochs {
        for (x, y) in &batches {
            let (pred, trace) = layer.forward_traced(x, Masking::Step(step))?;
            let (value, upstream) = loss.evaluate(&pred, y)?;
            if !value.is_finite() {
                return Ok((train_curve, eval_curve, RunStatus::Diverged { epoch }));
            }
            let grads = layer.backward_with_trace(&trace, x, &upstream, step)?;
            if !grads.is_finite() {
                return Ok((train_curve, eval_curve, RunStatus::Diverged { epoch }));
            }
            optimizer.step(layer.trainable_mut(), &grads.flat())?;
            step += 1;
        }
        let train_loss = evaluate(layer, loss, &task.train.x, &task.train.y)?;
        let eval_loss = evaluate(layer, loss, &task.eval.x, &task.eval.y)?;
        if !train_loss.is_finite() || !eval_loss.is_finite() {
            return Ok((train_curve, eval_curve, RunStatus::Diverged { epoch }));
        }
        train_curve.push(train_loss);
        eval_curve.push(eval_loss);
    }
    Ok((train_curve, eval_curve, RunStatus::Completed))
}

/// Builds the task and layer from `cfg`, trains, and collects the result.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let started = Instant::now();
    let task = make_task(&cfg.task, cfg.data_seed)?;
    let mut layer = cfg.layer.build(task.w_pre.clone())?;
    let base_before = layer.w_pre().clone();
    let mut optimizer = Optimizer::new(cfg.optimizer)?;

    let (train_loss, eval_loss, status) =
        train_layer(&mut layer, &task, &mut optimizer, cfg.epochs, cfg.batch_size)?;

    let frozen_base_intact = bits_equal(&base_before, layer.w_pre());
    let final_rank = if layer.nonlinearity().is_linear() {
        let e = layer.effective_weight_with(Masking::Expected)?;
        if e.is_finite() {
            Some(numerical_rank(&e, DEFAULT_RANK_TOL)?)
        } else {
            None
        }
    } else {
        None
    };
    let eval_accuracy = match task.loss() {
        Loss::CrossEntropy => Some(accuracy(&layer.forward_eval(&task.eval.x)?, &task.eval.y)),
        Loss::Mse => None,
    };
    let accounting = AccountingReport::for_layer(&cfg.layer, &layer, cfg.reference_r)?;
    Ok(ExperimentResult {
        key: cfg.key(),
        config: cfg.clone(),
        seed: cfg.data_seed,
        status,
        train_loss,
        eval_loss,
        eval_accuracy,
        final_rank,
        accounting,
        frozen_base_intact,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

fn bits_equal(a: &Matrix, b: &Matrix) -> bool {
    a.shape() == b.shape()
        && a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .all(|(x, y)| x.to_bits() == y.to_bits())
}
