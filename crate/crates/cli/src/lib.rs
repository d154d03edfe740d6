//! Scenario runner, capture processor and artifact writers for the radcom
//! simulator.

pub mod artifacts;
pub mod error;
pub mod iq;
pub mod params;
pub mod pipeline;
pub mod scenario;

pub use error::{CliError, CliResult};
