//! PPO learner over the market environment: squashed-Gaussian policy, value
//! baseline, clipped-surrogate updates with manual gradients, and the staged
//! curriculum driver.

mod checkpoint;
mod curriculum;
pub mod network;
mod policy;
mod ppo;

use thiserror::Error;

pub use checkpoint::{Checkpoint, CurriculumPosition, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use curriculum::{
    collect_batch, default_schedule, evaluate_policy, run_episode, scale_schedule, train_curriculum,
    validate_schedule, CurriculumStage, EvaluationSummary, TrainingLog, TrainingLogRow, TrainingOutcome,
    TRAINING_LOG_HEADER,
};
pub use policy::{gaussian_entropy, gaussian_log_density, squash, squash_log_jacobian, unsquash, ActionSample, PolicyParameters};
pub use ppo::{
    discounted_return, objective_and_grad, ppo_update, prepare_samples, returns_to_go, trajectory_log_prob,
    ObjectiveStats, Objective, Optimizer, OptimizerKind, Sample, TrainerConfig, Trajectory, TrajectoryStep,
    UpdateStats, LOG_STD_BOUNDS,
};

use crate::env::EnvError;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("non-finite gradient or parameters; update aborted")]
    NonFiniteGradient,
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid trainer configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// SplitMix64 finaliser; derives independent stream seeds from a base seed.
pub(crate) fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
