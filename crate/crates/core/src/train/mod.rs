//! The training schedule: Stage-1 pretraining with a binary reward,
//! Stage-2 training under a frozen policy, then joint training.

mod adam;
mod checkpoint;
mod config;
mod trainer;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, Phase, Progress};
pub use config::{JointSchedule, TrainConfig};
pub use trainer::{
    no_hook, pretrain_stage1, run_phase, train_joint, train_stage2_frozen, Control, EpochLog, TrainData,
};
