//! Joint pretraining of a shared encoder and warm-started fitting of new signals.

mod normalize;
mod optim;
mod sampler;
mod trainer;

pub use normalize::{axis_coords, denormalize_outputs, normalize_coords, normalize_outputs};
pub use optim::{adam_step, loss, loss_value, LossKind, Moments, TrainConfig};
pub use sampler::{batch_rng, sample_batch, BATCH_STREAM};
pub use trainer::{fit_new, full_loss, pretrain_joint, EvalPoint, PreparedSignal, SharedTrainer, TrainRun};
