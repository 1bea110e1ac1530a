//! Experiment configuration, the staged pipeline, parameter sweeps and
//! plot-ready CSV output.

mod config;
mod pipeline;
mod plot;
mod sweep;

pub use config::{
    check_grid, AnalysisBlock, ExperimentConfig, ManifoldBlock, ModelBlock, NetworkBlock, SweepBlock, SweepParameter,
    REFERENCE_CONFIG,
};
pub use pipeline::{
    initial_state, linger_csv, run_experiment, run_through, Manifest, Prepared, RunArtifact, Stage, StageRecord,
    StageStatus, RNG_NAME,
};
pub use plot::{emit_plot_data, plot_data, PlotKind};
pub use sweep::{
    sweep_k, sweep_k_with, sweep_spread, sweep_spread_with, workers_from_env, SweepRow, SweepTable, WORKERS_ENV,
};
