//! Loss, optimization loop and checkpoint persistence.

pub mod checkpoint;
pub mod fit;
pub mod gradcheck;
pub mod loss;
pub mod schedule;

pub use checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::check_model_gradients;
pub use fit::{dataset_loss, fit, FitOutcome};
pub use loss::probe_loss;
pub use schedule::{scheduler_step, EpochRecord, TrainConfig, TrainState};
