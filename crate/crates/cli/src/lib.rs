//! Config-driven experiment runner: parse a TOML problem description, run one
//! command against the solver library and write CSV tables plus a JSON envelope.

pub mod config;
pub mod emit;
pub mod run;
pub mod validate;

pub use config::{parse_config, ConfigError, RunConfig};
pub use emit::{emit, EmitError};
pub use run::{run, Envelope};
