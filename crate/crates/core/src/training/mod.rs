//! Objective, optimization loop, checkpoints and evaluation.

mod checkpoint;
mod config;
mod evaluate;
mod loss;
mod trainer;

pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use config::TrainConfig;
pub use evaluate::{
    binarize, compare, evaluate, evaluate_segmenter, Comparison, ComparisonRow, DatabaseScore,
    MetricReport, Prediction, Segmenter, DEFAULT_THRESHOLD,
};
pub use loss::{
    build_objective, segmentation_loss, total_loss, LossBreakdown, LossNodes, ObjectiveForm,
    SEG_EPS,
};
pub use trainer::{
    prepare, train_baseline, train_ra_runet, StepRecord, TrainMode, TrainOutcome, Trainer,
};
