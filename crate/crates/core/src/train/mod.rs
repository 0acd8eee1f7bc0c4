//! Losses, optimiser, sampling, augmentation and the two training stages.

mod adam;
mod augment;
mod config;
mod early_stop;
mod loss;
mod sampling;
mod trainer;

pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use augment::{augment, augment_with, center_offsets, crop, flip_horizontal, AugmentConfig, CROP};
pub use config::{FinetuneMode, TrainConfig};
pub use early_stop::{early_stop, Decision, EarlyStopping};
pub use loss::{bce_loss, bce_loss_f64, ce_loss, ce_loss_slice};
pub use sampling::{oversample_epoch, split_groups, window_start};
pub use trainer::{
    clip_logits, configure_finetune, finetune_forgery, prepare_clip, pretrain_lipreading, EpochLog,
    EpochObserver, ForgerySample, LipreadingSample, TrainOutcome,
};
