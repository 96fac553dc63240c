//! Benchmark harness: runs configured experiment grids over the validation
//! pipeline and writes per-block latency breakdowns and summaries.

pub mod compare;
pub mod config;
pub mod error;
pub mod experiment;

pub use compare::{compare, format_report, CellRatio};
pub use config::{load_config, parse_config, CacheSetting, ExperimentSpec};
pub use error::BenchError;
pub use experiment::{
    read_rows, read_summary, run_experiment, write_summary, CellSummary, ExperimentResult, Row, Stat, CSV_HEADER,
    METRICS,
};

/// Overrides the output directory of experiment runs.
pub const OUT_DIR_ENV: &str = "VALPHASE_OUT_DIR";
