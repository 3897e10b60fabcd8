//! Trial-data ingestion, real-data reports, CSV output and the verification
//! suite behind the `selmean` binary.

pub mod dataset;
pub mod error;
pub mod output;
pub mod report;
pub mod verify;

pub use error::{CliError, Result};
