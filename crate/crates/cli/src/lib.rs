//! Run orchestration for the `chdg` solver: configuration, simulation output,
//! parameter sweeps and the verification suites.

pub mod config;
pub mod error;
pub mod initial;
pub mod io;
pub mod simulate;
pub mod suites;
pub mod sweep;

pub use config::{load_config, parse_config, RunConfig};
pub use error::{CliError, Result};
pub use simulate::{run_simulation, RunStatus, RunSummary};
