//! Experiment configuration, the trial runner and aggregation of trial
//! records into metric tables.

mod aggregate;
mod config;
mod records;
mod runner;

pub use aggregate::{aggregate, axis_name};
pub use config::{
    context_steps, prediction_steps, CodecOptions, Domain, ExperimentConfig, IcOptions, MetricOptions, Sweep,
    MAX_FAILURE_FRACTION, SCHEMA_VERSION,
};
pub use records::{read_records, write_records, EnergyRecord, RecordKey, SliceDiagnostics, TrialRecord, TrialStatus};
pub use runner::{
    run_energy_experiment, run_experiment, run_multistep, run_one_step_context_sweep, run_one_step_output_sweep,
    units, RunManifest, RunSummary, Runner, Unit,
};
