//! Experiment registry, TOML configuration and artifact persistence.

pub mod config;
pub mod io;
pub mod registry;

pub use config::{ConfigFile, ExperimentSpec, Overrides};
pub use registry::{find, registry, run, Experiment, RunReport};

/// Environment variable overriding the output root.
pub const OUT_ENV: &str = "AC_LAB_OUT";
pub const DEFAULT_OUT: &str = "ac-lab-out";
