//! Experiment configuration, execution and reporting.

pub mod config;
pub mod report;
pub mod run;
pub mod svg;
pub mod table;

pub use config::{
    CelestialConfig, CelestialModel, EnergyGrid, ExperimentConfig, ExperimentKind,
    TodaPoincareConfig, TodaSweepConfig, ToyRunConfig, EARTH_MASS,
};
pub use report::{emit_report, manifest, MANIFEST_FILE, SCHEMA_VERSION};
pub use run::{run_experiment, ExperimentRecord, RunStatus, Summary};
pub use table::{Cell, Table};
