//! Experiment plumbing: generators, Matrix Market IO, TOML configs, the
//! experiment runner, trace files and reports.

pub mod config;
pub mod generators;
pub mod matrix_market;
pub mod report;
pub mod runner;
pub mod trace;

pub use config::{
    build_problem, read_csv_matrix, read_csv_vector, write_csv_matrix, write_csv_vector, ExperimentConfig, Problem,
    ProblemSpec, SolverKind, SolverSpec,
};
pub use generators::{
    consistent_rhs, gaussian_marginal, gaussian_rhs, grid_l1_cost, random_cost, sv_profile_matrix, uniform_marginal,
    SvProfile,
};
pub use matrix_market::{read_matrix_market, write_matrix_market};
pub use report::{build_report, Report};
pub use runner::{default_output_dir, run_experiment, Envelope, ExperimentSummary, RunOptions};
pub use trace::{read_trace_csv, write_trace_csv, TraceRow};
