//! Experiment harness: random instance generation, policy runs, Monte Carlo
//! evaluation and CSV export.

pub mod experiment;
pub mod generate;
pub mod policy;
pub mod report;

pub use experiment::{
    compare_policies, derived_seed, run_experiment, solve_policy, Comparison, ExperimentConfig,
    InstanceSource, PolicyFailure, PolicyRun,
};
pub use generate::{generate_instance, GeneratorSpec, ShiftRule};
pub use policy::Policy;
pub use report::{MasterKey, ReportRow, ScheduleRow, TraceRow, REPORT_HEADER, TRACE_HEADER};
