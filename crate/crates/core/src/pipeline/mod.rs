//! Experiment engine: training loops, per-epoch evaluation, trajectories.

pub mod checkpoint;
pub mod config;
pub mod config_file;
pub mod evaluate;
pub mod report;
pub mod train;
pub mod trajectory;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use config::{derive_seed, DataConfig, EvalConfig, MiConfig, ModelConfig, StageConfig, TrainConfig};
pub use config_file::{apply_config_text, apply_override, load_config_file};
pub use evaluate::{evaluate_epoch, load_experiment_data, EpochRecord, ExperimentData, MiResult, MiSchedule, ProbeResult};
pub use report::{format_comparison, format_summary, summarize, RunSummary, TargetSummary};
pub use train::{checkpoint_path, init_model, train, train_ctc, train_vanilla, TrainOptions, TrainOutcome};
pub use trajectory::{
    emit_trajectory, read_trajectory, read_trajectory_csv, CheckpointRef, TrainMode, Trajectory, TrajectoryTable,
};
