//! Benchmarks and experiments: Hurink files, the instance generator,
//! disturbances, metrics and experiment protocols.

pub mod bounds;
pub mod config;
pub mod disturb;
pub mod experiment;
pub mod fjs;
pub mod generator;
pub mod metrics;

pub use bounds::{bundled_data_dir, bundled_instance_path, Bounds, BoundsError, BoundsTable};
pub use fjs::{parse_fjs, Alternative, FjsError, FjsInstance};
pub use generator::{generate_instance, DurationFamily, GenerateError, GeneratedInstance, GeneratorSpec, SLACK_TOLERANCE};
pub use metrics::{error_stats, median, relative_error, slack_ratio, ErrorStats, MetricError};
pub use disturb::{
    inject_disturbance, run_with_disturbance, stranded_tasks, AfterEvent, Applied, DisturbError, DisturbanceEvent,
    DisturbanceKind, DisturbanceRun, DisturbanceSetup, NewJob, Plant,
};
pub use config::{ConfigError, ExperimentConfig, MeasureChoice, Protocol, StoreKind};
pub use experiment::{run_experiment, ExperimentError, ExperimentOutcome};
