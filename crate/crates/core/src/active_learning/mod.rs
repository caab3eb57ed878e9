//! Retrospective active learning over a surrogate backbone.

pub mod harness;
pub mod strategy;
pub mod surrogate;
pub mod task;

pub use harness::{cycles_csv, run_cycles, run_experiment, train_probe_ranker, write_logs, AlConfig, CycleResult};
pub use strategy::{rank_pool, Strategy};
pub use surrogate::{rmse, Surrogate, SurrogateConfig};
pub use task::{planted_task, AlMolecule, PlantedTask, TaskSpec, EASY_CLUSTER, HARD_CLUSTER};
