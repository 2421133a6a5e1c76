//! Experiment runner: configuration, seeded runs, presets and reports.

pub mod config;
pub mod error;
pub mod presets;
pub mod report;
pub mod run;
pub mod verify_files;

pub use config::{EvalConfig, RunConfig, RunSection};
pub use error::{HarnessError, Result};
pub use presets::{desk_config, preset, PRESETS};
pub use report::{emit_report, load_report, HistoryPoint, RunReport, SeedReport, Summary};
pub use run::{
    ablation_pool_size, run_experiment, run_seed, zero_shot_checkpoint, zero_shot_eval,
    INCOMPLETE_MARKER,
};
pub use verify_files::{verify_paths, FileCheck};
