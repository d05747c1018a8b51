//! Configuration, problem catalog, scenarios, CSV output and kernel caching for the `vlq` tool.

// Comparisons are written `!(x > y)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cache;
pub mod catalog;
pub mod config;
pub mod error;
pub mod report;
pub mod scenario;

pub use cache::KernelCache;
pub use config::{load_config, parse_config, RunConfig};
pub use error::{CliError, Result};
pub use report::ScenarioReport;
pub use scenario::run_scenario;
