//! Experiment driver for `gff-core`: binary field streams, configs, run
//! manifests, the named experiment pipelines and plot-ready output.

pub mod config;
mod error;
pub mod experiments;
pub mod io;
pub mod manifest;
pub mod parse;
pub mod table;

pub use error::{LabError, Result};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "GFF_WORKERS";

/// Size the global rayon pool. `None` leaves rayon's default (all cores).
/// Results never depend on the worker count.
pub fn configure_workers(workers: Option<usize>) -> Result<()> {
    if let Some(n) = workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| LabError::Value {
                key: WORKERS_ENV.into(),
                msg: e.to_string(),
            })?;
    }
    Ok(())
}
