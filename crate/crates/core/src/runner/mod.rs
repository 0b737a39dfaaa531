//! Experiment orchestration: configs, training, evaluation and ablations.

mod ablate;
mod config;
mod evaluate;
mod train;

pub use ablate::{ablate, cell_guidance, write_tables, AblationCell, AblationMatrix, AblationTable, CellResult, ABLATION_IOU};
pub use config::{
    default_output_root, merge_patch, ExperimentConfig, ModelConfig, TrainingConfig, OUTPUT_ROOT_ENV,
};
pub use evaluate::{evaluate, guidance_name, predict_video, save_evaluation, Evaluation, VideoPrediction};
pub use train::{build_graphs, loss_and_gradients, save_training, train, video_gradients, write_loss_curve, TrainOutcome, Trainer};
