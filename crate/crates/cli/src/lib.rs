//! Workbench front end: the model file format, the check / crossvalidate /
//! dacheck / simulate commands, and report rendering.

pub mod commands;
pub mod model;
pub mod report;

pub use commands::{
    cmd_check, cmd_crossvalidate, cmd_dacheck, cmd_simulate, simulate_trace, CheckOptions,
    CommandError, CrossValidateOptions, DaCheckOptions, SimulateOptions, SimulationMode,
};
pub use model::{load_model, LoadedModel, ModelError, ModelFile};
pub use report::Format;
