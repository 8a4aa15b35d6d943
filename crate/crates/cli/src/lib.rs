//! Command line and HTTP front end for semflow pipelines.

pub mod commands;
pub mod service;
pub mod store;

pub use commands::{
    backend_from_name, cli_bench, cli_compile_nl, cli_compile_nl_file, cli_gen, cli_run, BenchOptions, CliError,
    CompileOutput, RunOutcome, EXIT_CLARIFICATION, EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION,
};
pub use service::{router, serve, AppState};
