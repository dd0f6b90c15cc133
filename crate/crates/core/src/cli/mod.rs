//! Command-line front end: configuration, pipelines and run manifests.

pub mod config;
pub mod manifest;
pub mod run;

pub use config::{parse_config, parse_config_str, Mode, Overrides, Rho0, RunConfig};
pub use manifest::{strip_timings, Manifest};
pub use run::{run, verify_manifest, RunOutcome};
