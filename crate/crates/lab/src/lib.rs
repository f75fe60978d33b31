//! Scenario files, the task runner and CSV emission for the impulse-control
//! laboratory. The binary in `main.rs` is a thin clap front end over this.

pub mod config;
pub mod run;

pub use config::{parse_config, parse_str, ConfigError, Scenario, Task};
pub use run::{run, run_scenario, write_summary, RunError, RunReport};
