//! Desk-scale experiments: synthetic tasks, optimizers, training runs and the
//! density / dimension ablation sweeps.

mod optim;
mod sweep;
mod task;
mod train;

pub use optim::{Optimizer, OptimizerConfig};
pub use sweep::{
    median, run_all, summarize, with_seed, CellSummary, DensitySweepConfig, DimensionSweepConfig,
    SweepSpec,
};
pub use task::{accuracy, make_task, Dataset, Loss, SyntheticTask, TaskSpec};
pub use train::{
    evaluate, run_experiment, train_layer, ExperimentConfig, ExperimentResult, RunStatus,
};
