//! Host-side tooling around `vtree-core`: scenario files, trace and metrics
//! output, the reachability oracle, Monte-Carlo sweeps and random scenario
//! generation. The `vtree` binary is a thin layer over these modules.

pub mod error;
pub mod generate;
pub mod oracle;
pub mod output;
pub mod scenario_file;
pub mod sweep;

pub use error::SimError;
