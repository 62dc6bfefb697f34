//! Experiment harness: configuration, metrics CSV and the run drivers.

mod config;
mod metrics;
mod runner;

pub use config::{default_data_dir, ExperimentConfig, Precision, DATA_DIR_ENV};
pub use metrics::{read_metrics, MetricsRecord, MetricsWriter, ACTIVATION_SLOTS, METRICS_HEADER};
pub use runner::{
    evaluate, evaluate_checkpoint, grid_cell_id, load_source, run_grid, run_init_sweep, run_train,
    run_train_with, run_transfer, run_transfer_with, sweep_cell_id, train_model, GridSummary,
    RunSummary, SeedOutcome, Splits, TransferSummary, ARM_FINETUNE, ARM_NO_PRETRAIN, ARM_PRETRAIN,
    ARM_PRETRAIN_ONLY,
};
