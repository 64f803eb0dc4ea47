//! Training: anchor/positive sampling, the batch-hard loss, ADAM, and the
//! epoch loop.

mod adam;
mod loss;
mod manifest;
mod pairs;
mod trainer;

pub use adam::{adam_step, AdamState};
pub use loss::{batch_hard_loss, BatchHardLoss};
pub use manifest::{parse_manifest, read_manifest, write_manifest, FragmentPair, ManifestEntry};
pub use pairs::{sample_training_pairs, Fragment, PairSampling, TrainingPair};
pub use trainer::{collect_training_pairs, loss_log_csv, train, train_on_samples, train_pairs, LossRecord, TrainOptions, TrainOutcome};
