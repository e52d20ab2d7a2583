//! Config-driven experiment grids for the quadrature and filtering comparisons, with
//! CSV output and order-statistic summaries.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod summary;

pub use config::{config_hash, ExperimentConfig, ExperimentKind};
pub use error::{HarnessError, Result};
pub use experiments::run_experiment;
pub use output::{read_rows, write_rows, MetricRow, VERSION};
pub use summary::{summarize, SummaryRow};
