//! Reproducible experiment driver: presets, configuration and run records.

pub mod config;
pub mod presets;
pub mod record;

pub use config::{resolve, validate, validate_config, ConfigError, Diagnostic, ExperimentConfig, Overrides};
pub use presets::{preset, preset_names, run_config, run_preset, Preset, PRESETS};
pub use record::{RunRecord, Verdict};
