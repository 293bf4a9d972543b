//! File formats, batch runs and the HTTP session service around `gvd-core`.

pub mod io;
pub mod run;
pub mod service;

pub use io::{load_instance, load_result, parse_instance, InstanceFile, LoadedInstance, ResultFile};
pub use run::{run_pipeline, RunError, RunOptions};
