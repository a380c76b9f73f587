//! Losses, optimization, checkpoints, and gradient checking.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod loss;
pub mod train;

pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use gradcheck::{check_gradients, run_gradcheck, GradcheckConfig, GradcheckMode, GradcheckReport};
pub use loss::{margin_loss, one_hot, reconstruction_loss, total_loss, MarginLossConfig, MarginVariant};
pub use train::{accuracy, history_csv, initialize_model, samples_at, train, EpochRecord, Sample, TrainConfig, TrainReport};
