//! Config files, CSV output and the `monopoisson` command-line tool built on
//! [`monopoisson_core`].

pub mod check;
pub mod commands;
pub mod config;
pub mod report;

pub use check::run_check;
pub use commands::{AppError, Outcome};
pub use config::{parse_config, to_toml, ConfigError, Model, RunConfig};
