//! Command-line front end: configuration files, flag overrides and the
//! dispatch of each command to the library.

pub mod config;
pub mod run;

pub use config::{parse_config, parse_p_grid, Command, ConfigError, Overrides, RunConfig};
pub use run::{run, Outcome};

/// Sizes the global rayon pool. Only the first call has an effect.
pub fn init_workers(workers: Option<usize>) {
    if let Some(n) = workers.filter(|&n| n > 0) {
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::debug!("worker pool already initialised");
        }
    }
}
