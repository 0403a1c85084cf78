//! Staged training: freezing plans, the optimizer loop, pipelines,
//! checkpoints and the finetuning grid search.

mod checkpoint;
mod pipeline;
mod run;
mod stage;
mod sweep;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};
pub use pipeline::{
    build_stage_dataset, check_stage_order, run_pipeline, stage_checkpoint_path, stage_log_path, Corpora,
    PipelineOutcome,
};
pub use run::{run_stage, validation_loss, Example, StepRecord, TrainLog};
pub use stage::{derive_stage_seed, freeze_plan, required_components, Component, FinetuneMode, StageConfig};
pub use sweep::{hyperparameter_sweep, SweepRow, SweepScore, DEFAULT_EPOCH_GRID, DEFAULT_LR_GRID};
