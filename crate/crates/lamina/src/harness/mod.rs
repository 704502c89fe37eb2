//! Experiment runner, presets, report emission and the verification suite.

pub mod config;
pub mod presets;
pub mod report;
pub mod runner;
pub mod verify;

pub use config::{ConfigError, Experiment, Format, RawConfig};
pub use report::{ConvergenceReport, ConvergenceRow, DemoReport, DemoRow, EmitError};
pub use runner::{run_common_atom_demo, run_convergence, RunError};
pub use verify::{run_all_criteria, CriterionResult};
