//! Toy training runs: cold and warm tasks, SGD over pool estimators,
//! sampled evaluation and q sweeps.

pub mod config;
pub mod evaluate;
pub mod task;
pub mod train;

pub use config::{EvalConfig, Method, Scenario, SweepConfig, TaskConfig, TrainConfig};
pub use evaluate::{evaluate, majority, EvalMetrics};
pub use task::{make_cold_task, make_noisy_task, make_task, make_warm_task, task_for_config, Task};
pub use train::{
    calibrate_budget, contamination, qsweep, train, MetricsRow, MetricsTrace, QSweepRow, RunStatus,
    TrainOutcome,
};
