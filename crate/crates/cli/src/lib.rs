//! Batch runner for cclab experiments: TOML specs in, versioned CSVs out.

pub mod criteria;
pub mod error;
pub mod fixtures;
pub mod spec;
pub mod sweep;
pub mod verify;

pub use error::{CliError, Result};
pub use spec::{ExperimentSpec, Overrides};
