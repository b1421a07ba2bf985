//! Experiment orchestration behind the `filterprune` command line.

mod commands;
mod spec;

pub use commands::{
    approach, cmd_generate, cmd_prune, cmd_report, cmd_run_matrix, cmd_saliency, cmd_train_baseline, load_baseline, load_dataset, plot_data,
    render_table, trace_path, validate_rows, BaselineRecord, Cell, CellStatus, ExperimentMatrix, GenerateSummary, PlotData, PlotSeries,
    HISTOGRAM_BINS,
};
pub use spec::{ArchitectureConfig, ExperimentSpec};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid experiment spec: {0}")]
    Config(String),
    #[error("missing artifact {0}; run the earlier pipeline step first")]
    Missing(PathBuf),
    #[error("result row violates report invariants: {0}")]
    InvalidRow(String),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Synth(#[from] crate::radarsynth::SynthError),
    #[error(transparent)]
    Tensor(#[from] crate::tensorcore::TensorError),
    #[error(transparent)]
    Saliency(#[from] crate::saliency::SaliencyError),
    #[error(transparent)]
    Surgeon(#[from] crate::surgeon::SurgeonError),
    #[error(transparent)]
    Schedule(#[from] crate::schedules::ScheduleError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
