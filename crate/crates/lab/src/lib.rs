//! Configuration, benchmark registry, cross-estimator synthesis and report
//! generation behind the `celab` command-line tool.

pub mod cli;
pub mod config;
pub mod equiv;
pub mod error;
pub mod registry;
pub mod report;

pub use config::{parse_config, RunConfig};
pub use equiv::{run_equivalence, EquivalenceReport};
pub use error::LabError;
pub use registry::{lookup, registry};
pub use report::emit_report;
