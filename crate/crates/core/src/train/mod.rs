//! Losses, optimizer, schedule, the training loop and gradient checking.

mod fit;
mod gradcheck;
mod loss;
mod optim;

pub use fit::{fit, fit_with_sampler, EpochStats, Sample, TrainConfig, TrainHistory};
pub use gradcheck::{finite_diff_max_rel_err, grad_check};
pub use loss::{bce_dice_loss, ce_dice_loss, LossKind, DICE_SMOOTHING};
pub use optim::{cosine_lr, AdamW};
