//! Evaluation harness: reference matcher, generators, evaluators and the
//! end-to-end configurations.

mod configs;
mod eval;
mod gen;
mod oracle;
mod patterns;
mod suites;

pub use configs::{config_summary, run_config, sem_pattern_spec, ConfigName, ConfigRun, HarnessError, PatternTask};
pub use eval::{eval_clustering, eval_pattern, ClusteringScores, EvalError, MatchKey, PrfScores};
pub use gen::{
    gen_stream, planted_schema, GenConfig, GenError, GeneratedStream, GroundTruth, PLANTED_PATTERN,
    PLANTED_PATTERN_ID, TOPICS,
};
pub use oracle::{oracle_match, OracleError, MAX_ORACLE_DEPTH, MAX_ORACLE_EVENTS};
pub use patterns::{random_partition, random_pattern, random_stream, random_unbounded_negation, ALPHABET};
pub use suites::{suite_clustering, suite_configs, suite_oracle, Suite};
