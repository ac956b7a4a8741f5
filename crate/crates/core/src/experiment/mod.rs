//! Configuration-driven experiment harness: TOML configs naming one of the
//! presets, runs that produce result rows with embedded acceptance
//! predicates, and the files a run writes.

pub mod config;
pub mod report;
pub mod run;

pub use config::{
    hamiltonian_presets, validate_config, validate_str, Diagnostic, Experiment, ExperimentConfig, Params, Tolerances,
};
pub use report::{Artifact, Predicate, RunReport, Table};
pub use run::{run_experiment, substream_seed};
